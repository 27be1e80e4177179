"""Train/test partitioning strategies over measurement datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataValidationError

STRATEGIES = ("within_task", "by_task", "by_target")


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint, exhaustive record-id partition plus its provenance."""

    strategy: str
    test_ratio: float
    seed: int
    train_ids: frozenset[str]
    test_ids: frozenset[str]

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "test_ratio": self.test_ratio,
            "seed": self.seed,
            "train_ids": sorted(self.train_ids),
            "test_ids": sorted(self.test_ids),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        try:
            return cls(
                strategy=str(obj["strategy"]),
                test_ratio=float(obj["test_ratio"]),
                seed=int(obj["seed"]),
                train_ids=frozenset(obj["train_ids"]),
                test_ids=frozenset(obj["test_ids"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed split file: {exc}") from exc


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(ds: Dataset, strategy: str, test_ratio: float, seed: int) -> SplitAssignment:
    """Partition record ids by one of three strategies.

    within_task samples records inside every task (each task with >= 2
    records contributes to both sides); by_task and by_target hold out whole
    tasks or whole targets, rounding the test count up so the test side is
    never empty.
    """
    if strategy not in STRATEGIES:
        raise DataValidationError(f"unknown split strategy {strategy!r}")
    if not 0.0 < test_ratio < 1.0:
        raise DataValidationError(f"test_ratio must be in (0, 1), got {test_ratio}")
    if not ds.records:
        raise DataValidationError("split: dataset has no records")

    rng = np.random.default_rng(seed)
    test: set[str] = set()

    if strategy == "within_task":
        for task in ds.tasks:
            rec_ids = ds.records_by_task[task.task_id]
            n = len(rec_ids)
            if n == 0:
                continue
            if n == 1:
                continue  # lone record stays on the train side
            n_test = _round_half_up(test_ratio * n)
            n_test = min(max(n_test, 1), n - 1)
            picks = rng.permutation(n)[:n_test]
            test.update(rec_ids[i] for i in picks)
    elif strategy == "by_task":
        task_ids = [t.task_id for t in ds.tasks]
        if len(task_ids) < 2:
            raise DataValidationError("by_task split needs at least 2 tasks")
        n_test = math.ceil(test_ratio * len(task_ids))
        picks = rng.permutation(len(task_ids))[:n_test]
        held = {task_ids[i] for i in picks}
        for rec in ds.records:
            if rec.task_id in held:
                test.add(rec.record_id)
    else:
        targets = [hw.target_id for hw in ds.hardware if ds.tasks_by_target.get(hw.target_id)]
        if len(targets) < 2:
            raise DataValidationError("by_target split needs at least 2 populated targets")
        n_test = math.ceil(test_ratio * len(targets))
        picks = rng.permutation(len(targets))[:n_test]
        held_targets = {targets[i] for i in picks}
        held_tasks = {
            tid for tgt in held_targets for tid in ds.tasks_by_target.get(tgt, [])
        }
        for rec in ds.records:
            if rec.task_id in held_tasks:
                test.add(rec.record_id)

    all_ids = {rec.record_id for rec in ds.records}
    train = all_ids - test
    return SplitAssignment(
        strategy=strategy,
        test_ratio=test_ratio,
        seed=seed,
        train_ids=frozenset(train),
        test_ids=frozenset(test),
    )


def save_split(assignment: SplitAssignment, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(assignment.to_json(), indent=2) + "\n", encoding="utf-8"
    )


def load_split(path: str | Path) -> SplitAssignment:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"malformed split file: {exc}") from exc
    return SplitAssignment.from_json(obj)


def ordered_ids(ds: Dataset, ids: frozenset[str]) -> list[str]:
    """The given record ids in dataset order (stable across runs)."""
    return [rec.record_id for rec in ds.records if rec.record_id in ids]
