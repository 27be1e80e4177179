"""Cross-hardware model transfer: feature rewriting plus budgeted fine-tuning.

Moving a trained cost model to new hardware has three parts: rewrite the
hardware slots of the feature encoding to describe the destination, choose
which records to spend the limited re-measurement budget on, and continue
training from the existing weights on those records. The default scope
freezes the sequence encoder and lets only the attention block and output
head move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, throughput
from .errors import DataValidationError, TensorTuneError
from .features import encode_sequence_batch
from .hardware import FeatureMapping, HardwareParams, feature_vector, map_features
from .metrics import pairwise_comparison_accuracy, rmse
from .models import CostModel, _apply_rewrite_sequences
from .sampling import task_priority_order

SCOPES = ("heads-only", "full")
_HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class TransferConfig:
    target: str
    record_budget: int
    fine_tune_scope: str = "heads-only"
    fine_tune_epochs: int = 50
    learning_rate: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.record_budget < 1:
            raise DataValidationError("record_budget must be >= 1")
        if self.fine_tune_scope not in SCOPES:
            raise DataValidationError(
                f"fine_tune_scope must be one of {SCOPES}, got {self.fine_tune_scope!r}"
            )
        if self.fine_tune_epochs < 0 or self.learning_rate <= 0:
            raise DataValidationError("bad fine-tune hyperparameters")


@dataclass(frozen=True)
class TransferReport:
    source_targets: tuple[str, ...]
    destination_target: str
    scope: str
    budget: int
    n_tasks_selected: int
    n_train: int
    n_holdout: int
    rmse_before: float
    rmse_after: float
    pca_before: float | None
    pca_after: float | None
    epochs: int
    learning_rate: float
    mapping_actions: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "source_targets": list(self.source_targets),
            "destination_target": self.destination_target,
            "scope": self.scope,
            "budget": self.budget,
            "n_tasks_selected": self.n_tasks_selected,
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "rmse_before": self.rmse_before,
            "rmse_after": self.rmse_after,
            "pca_before": self.pca_before,
            "pca_after": self.pca_after,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "mapping_actions": list(self.mapping_actions),
        }

    def to_text(self) -> str:
        rows = [
            ("destination", self.destination_target),
            ("scope", self.scope),
            ("budget", str(self.budget)),
            ("tasks selected", str(self.n_tasks_selected)),
            ("train / holdout", f"{self.n_train} / {self.n_holdout}"),
            ("rmse before -> after", f"{self.rmse_before:.6f} -> {self.rmse_after:.6f}"),
            (
                "pca before -> after",
                f"{_fmt(self.pca_before)} -> {_fmt(self.pca_after)}",
            ),
            ("epochs", str(self.epochs)),
            ("learning rate", f"{self.learning_rate:g}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6f}"


def adapt_hardware(
    model: CostModel, src: HardwareParams, dst: HardwareParams
) -> tuple[CostModel, FeatureMapping]:
    """Point the model's hardware feature slots at the destination target.

    Tree ensembles split on exact learned thresholds and cannot be expected
    to extrapolate over substituted hardware features, so they are rejected
    here; retrain them instead.
    """
    if model.kind == "gbdt":
        raise TensorTuneError(
            "hardware adaptation is not supported for tree models; retrain instead"
        )
    mapping = map_features(src, dst)
    mapped = mapping.apply(feature_vector(src))
    values, mask = mapped.as_arrays()
    adapted = replace(
        model, hw_rewrite=(tuple(values.tolist()), tuple(mask.astype(float).tolist()))
    )
    return adapted, mapping


def select_tasks_for_retraining(
    ds: Dataset, target_id: str, budget: int
) -> tuple[list[str], list[str]]:
    """Pick (task_ids, record_ids) worth re-measuring under a record budget.

    Tasks on the target are visited in descending occurrence-times-flops
    priority (ties by task id); within a task, records go best throughput
    first, so a truncated budget still covers each task's high-signal
    points. Growing the budget only appends: the selection for budget b is a
    prefix of the selection for any larger budget.
    """
    if budget < 1:
        raise DataValidationError("budget must be >= 1")
    if target_id not in ds.hardware_by_id:
        raise DataValidationError(f"unknown target {target_id!r}")
    on_target = set(ds.tasks_by_target.get(target_id, []))
    if not on_target:
        raise DataValidationError(f"no tasks on target {target_id!r}")
    ordered_tasks = [t for t in task_priority_order(ds) if t in on_target]
    selected_tasks: list[str] = []
    selected_records: list[str] = []
    for tid in ordered_tasks:
        if len(selected_records) >= budget:
            break
        recs = ds.valid_records_of_task(tid)
        if not recs:
            continue
        ranked = sorted(recs, key=lambda r: (-throughput(r), r.record_id))
        room = budget - len(selected_records)
        selected_tasks.append(tid)
        selected_records.extend(r.record_id for r in ranked[:room])
    return selected_tasks, selected_records


def fine_tune(
    model: CostModel,
    ds: Dataset,
    cfg: TransferConfig,
    mapping: FeatureMapping | None = None,
) -> tuple[CostModel, TransferReport]:
    """Continue training the sequence model on budgeted target records.

    Records are drawn by select_tasks_for_retraining; a seeded 20% holdout
    of the drawn records measures before/after quality. heads-only scope
    updates the attention block and output head with the recurrent encoder
    frozen; full scope updates everything.
    """
    cfg.validate()
    if model.kind != "tuner":
        raise TensorTuneError("fine_tune supports only the sequence model")
    available = sum(
        len(ds.valid_records_of_task(tid))
        for tid in ds.tasks_by_target.get(cfg.target, [])
    )
    if cfg.record_budget > available:
        raise DataValidationError(
            f"record_budget {cfg.record_budget} exceeds the {available} "
            f"labeled records on target {cfg.target!r}"
        )
    task_ids, record_ids = select_tasks_for_retraining(ds, cfg.target, cfg.record_budget)
    if not record_ids:
        raise DataValidationError(f"no labeled records on target {cfg.target!r}")
    seqs, y = encode_sequence_batch(ds, record_ids)
    seqs = _apply_rewrite_sequences(model, seqs)
    groups = [ds.record_by_id[rid].task_id for rid in record_ids]

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(record_ids))
    n_holdout = max(1, int(round(_HOLDOUT_FRACTION * len(record_ids))))
    n_holdout = min(n_holdout, max(len(record_ids) - 1, 1))
    hold_idx = np.sort(perm[:n_holdout])
    train_idx = np.sort(perm[n_holdout:])
    if train_idx.size == 0 and cfg.fine_tune_epochs > 0:
        raise DataValidationError("budget too small to fine-tune: no train records")

    hold_seqs = [seqs[i] for i in hold_idx]
    hold_y = y[hold_idx]
    hold_groups = [groups[i] for i in hold_idx]
    train_seqs = [seqs[i] for i in train_idx]
    train_y = y[train_idx]

    base = model.estimator
    est = type(base)(**base.get_params())
    est.set_weights({k: v.copy() for k, v in base.get_weights().items()})

    pred_before = est.predict(hold_seqs)
    rmse_before = rmse(hold_y, pred_before)
    pca_before = _grouped_pca(hold_y, pred_before, hold_groups)

    if cfg.fine_tune_epochs > 0:
        all_groups = est.param_groups()
        if cfg.fine_tune_scope == "heads-only":
            trainable = set(all_groups["attention"]) | set(all_groups["head"])
        else:
            trainable = None
        est.continue_fit(
            train_seqs,
            train_y,
            epochs=cfg.fine_tune_epochs,
            learning_rate=cfg.learning_rate,
            trainable=trainable,
            eval_set=(hold_seqs, hold_y),
            eval_groups=hold_groups,
        )
    pred_after = est.predict(hold_seqs)
    rmse_after = rmse(hold_y, pred_after)
    pca_after = _grouped_pca(hold_y, pred_after, hold_groups)

    tuned = replace(model, estimator=est)
    report = TransferReport(
        source_targets=tuple(model.provenance.get("targets", [])),
        destination_target=cfg.target,
        scope=cfg.fine_tune_scope,
        budget=len(record_ids),
        n_tasks_selected=len(task_ids),
        n_train=int(train_idx.size),
        n_holdout=int(hold_idx.size),
        rmse_before=rmse_before,
        rmse_after=rmse_after,
        pca_before=pca_before,
        pca_after=pca_after,
        epochs=cfg.fine_tune_epochs,
        learning_rate=cfg.learning_rate,
        mapping_actions=tuple(mapping.actions) if mapping is not None else (),
    )
    return tuned, report


def run_transfer(
    model: CostModel,
    src: HardwareParams,
    dst: HardwareParams,
    target_ds: Dataset,
    budget: int,
    scope: str = "heads-only",
    epochs: int = 50,
    learning_rate: float = 1e-4,
    seed: int = 0,
) -> tuple[CostModel, TransferReport]:
    """adapt_hardware followed by budgeted fine_tune on the destination."""
    adapted, mapping = adapt_hardware(model, src, dst)
    cfg = TransferConfig(
        target=dst.target_id,
        record_budget=budget,
        fine_tune_scope=scope,
        fine_tune_epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
    )
    return fine_tune(adapted, target_ds, cfg, mapping)


def _grouped_pca(y: np.ndarray, y_hat: np.ndarray, groups) -> float | None:
    by_group: dict[str, list[int]] = {}
    for i, g in enumerate(groups):
        by_group.setdefault(g, []).append(i)
    scores = [
        pairwise_comparison_accuracy(y[idx], y_hat[idx])
        for idx in by_group.values()
        if len(idx) >= 2
    ]
    return float(np.mean(scores)) if scores else None
