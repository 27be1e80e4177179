"""Dataset pruning: invalid-record filtering and weighted task sampling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, throughput
from .errors import DataValidationError
from .workload import flop_count


@dataclass(frozen=True)
class SamplerConfig:
    target_fraction: float = 1.0
    low_perf_quantile: float = 0.1
    min_records_per_task: int = 8
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.target_fraction <= 1.0:
            raise DataValidationError(
                f"target_fraction must be in (0, 1], got {self.target_fraction}"
            )
        if not 0.0 <= self.low_perf_quantile < 1.0:
            raise DataValidationError(
                f"low_perf_quantile must be in [0, 1), got {self.low_perf_quantile}"
            )
        if self.min_records_per_task < 1:
            raise DataValidationError(
                f"min_records_per_task must be >= 1, got {self.min_records_per_task}"
            )


def filter_invalid(ds: Dataset, cfg: SamplerConfig) -> Dataset:
    """Drop error records, per-task low-throughput tails, and sparse tasks.

    Within each task the throughput quantile is computed with linear
    interpolation and records strictly below it are dropped, so quantile 0
    keeps every valid record.
    """
    cfg.validate()
    keep_records: set[str] = set()
    keep_tasks: set[str] = set()
    for task in ds.tasks:
        valid = ds.valid_records_of_task(task.task_id)
        if not valid:
            continue
        tp = np.asarray([throughput(r) for r in valid], dtype=np.float64)
        threshold = float(np.quantile(tp, cfg.low_perf_quantile))
        survivors = [r for r, t in zip(valid, tp) if t >= threshold]
        if len(survivors) >= cfg.min_records_per_task:
            keep_tasks.add(task.task_id)
            keep_records.update(r.record_id for r in survivors)
    tasks = [t for t in ds.tasks if t.task_id in keep_tasks]
    records = [r for r in ds.records if r.record_id in keep_records]
    return Dataset.build(list(ds.hardware), tasks, records, validate=False)


def _raw_task_weights(ds: Dataset) -> dict[str, float]:
    occurrence: dict[str, int] = {}
    for task in ds.tasks:
        occurrence[task.kernel.op] = occurrence.get(task.kernel.op, 0) + 1
    return {
        task.task_id: float(flop_count(task.kernel) * occurrence[task.kernel.op])
        for task in ds.tasks
    }


def task_weights(ds: Dataset) -> dict[str, float]:
    """Normalized task weights: flop count times operator occurrence count."""
    if not ds.tasks:
        raise DataValidationError("task_weights: dataset has no tasks")
    raw = _raw_task_weights(ds)
    total = sum(raw.values())
    return {tid: w / total for tid, w in raw.items()}


def task_priority_order(ds: Dataset, task_ids: list[str] | None = None) -> list[str]:
    """Task ids by descending unnormalized weight, ties broken by task_id."""
    raw = _raw_task_weights(ds)
    pool = list(raw) if task_ids is None else list(task_ids)
    return sorted(pool, key=lambda tid: (-raw[tid], tid))


@dataclass
class PruneReport:
    target_fraction: float
    realized_fraction: float
    records_before: int
    records_after: int
    tasks_before: int
    tasks_after: int
    records_after_filter: int
    tasks_after_filter: int
    retained_weight_mass: float
    fraction_unachievable: bool
    sampled_task_order: list[str]
    per_op_records: dict[str, tuple[int, int]]
    config: SamplerConfig

    def to_json(self) -> dict:
        out = asdict(self)
        out["per_op_records"] = {k: list(v) for k, v in self.per_op_records.items()}
        out["config"] = asdict(self.config)
        return out

    def to_text(self) -> str:
        lines = [
            f"records: {self.records_before} -> {self.records_after} "
            f"(post-filter {self.records_after_filter})",
            f"tasks:   {self.tasks_before} -> {self.tasks_after} "
            f"(post-filter {self.tasks_after_filter})",
            f"fraction: target {self.target_fraction:.4f} "
            f"realized {self.realized_fraction:.4f}"
            + ("  [unachievable from above]" if self.fraction_unachievable else ""),
            f"retained weight mass: {self.retained_weight_mass:.4f}",
            "per-op records (before -> after):",
        ]
        for op in sorted(self.per_op_records):
            before, after = self.per_op_records[op]
            lines.append(f"  {op}: {before} -> {after}")
        return "\n".join(lines) + "\n"


def prune_dataset(ds: Dataset, cfg: SamplerConfig) -> tuple[Dataset, PruneReport]:
    """Filter invalid records, then keep whole tasks sampled by weight.

    Tasks are drawn without replacement, proportionally to task_weights, until
    the retained record count first reaches target_fraction of the ORIGINAL
    record count; the crossing task is kept in full. Record and task order of
    the output follow the input dataset, not the sampling order.
    """
    cfg.validate()
    if not ds.records:
        raise DataValidationError("prune_dataset: dataset has no records")
    filtered = filter_invalid(ds, cfg)
    target_records = cfg.target_fraction * len(ds.records)

    weights = task_weights(filtered) if filtered.tasks else {}
    task_sizes = {
        tid: len(filtered.records_by_task[tid]) for tid in weights
    }

    available = sum(task_sizes.values())
    unachievable = available < target_records

    rng = np.random.default_rng(cfg.seed)
    order: list[str] = []
    chosen: set[str] = set()
    if unachievable:
        order = [t.task_id for t in filtered.tasks]
        chosen = set(order)
        retained = available
    else:
        remaining = [t.task_id for t in filtered.tasks]
        retained = 0
        while retained < target_records and remaining:
            probs = np.asarray([weights[tid] for tid in remaining], dtype=np.float64)
            probs /= probs.sum()
            pick = rng.choice(len(remaining), p=probs)
            tid = remaining.pop(int(pick))
            order.append(tid)
            chosen.add(tid)
            retained += task_sizes[tid]

    pruned = filtered.subset_tasks(chosen)
    mass = sum(weights[tid] for tid in chosen) if weights else 0.0

    per_op: dict[str, tuple[int, int]] = {}
    before_by_op: dict[str, int] = {}
    for rec in ds.records:
        task = ds.task_by_id.get(rec.task_id)
        if task:
            before_by_op[task.kernel.op] = before_by_op.get(task.kernel.op, 0) + 1
    after_by_op: dict[str, int] = {}
    for rec in pruned.records:
        op = pruned.task_by_id[rec.task_id].kernel.op
        after_by_op[op] = after_by_op.get(op, 0) + 1
    for op in sorted(set(before_by_op) | set(after_by_op)):
        per_op[op] = (before_by_op.get(op, 0), after_by_op.get(op, 0))

    report = PruneReport(
        target_fraction=cfg.target_fraction,
        realized_fraction=len(pruned.records) / len(ds.records),
        records_before=len(ds.records),
        records_after=len(pruned.records),
        tasks_before=len(ds.tasks),
        tasks_after=len(pruned.tasks),
        records_after_filter=len(filtered.records),
        tasks_after_filter=len(filtered.tasks),
        retained_weight_mass=mass,
        fraction_unachievable=unachievable,
        sampled_task_order=order,
        per_op_records=per_op,
        config=cfg,
    )
    return pruned, report


def prune_report_json(report: PruneReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
