"""Cost-model training, evaluation, and binary serialization.

A CostModel bundles one fitted estimator with the feature-layout version it
expects, provenance describing what it was trained on, and an optional
hardware-feature rewrite used when a model trained on one target is applied
to another.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .data import Dataset, ScheduleConfig, Task, dumps_dataset
from .errors import DataValidationError
from .estimators.gbdt import GradientBoostedTrees
from .estimators.mlp import CostMLP
from .estimators.tuner import RecurrentAttentionTuner
from .features import (
    CONTEXT_HW_MASK_SLICE,
    CONTEXT_HW_VALUE_SLICE,
    FLAT_LAYOUT_VERSION,
    HW_MASK_SLICE,
    HW_VALUE_SLICE,
    StepSequence,
    encode_flat_batch,
    encode_schedule,
    encode_schedule_steps,
    encode_sequence_batch,
)
from .metrics import pairwise_comparison_accuracy, rmse, top_k_score
from .splits import SplitAssignment, ordered_ids

MODEL_KINDS = ("gbdt", "mlp", "tuner")
_MODEL_MAGIC = b"TTMODEL1\n"


@dataclass(frozen=True)
class GBDTConfig:
    """Hyperparameters for the boosted-tree cost model."""

    num_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    min_samples_leaf: int = 4

    def to_json(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GBDTConfig":
        return cls(**obj)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the gradient-trained cost models.

    The recurrent/attention fields only apply to the sequence model; the MLP
    ignores them.
    """

    batch_size: int = 16
    epochs: int = 200
    learning_rate: float = 1e-3
    recurrent_layers: int = 3
    attention_heads: int = 2
    attention_unroll_steps: int = 2
    optimizer: str = "adam"
    loss: str = "rmse"
    seed: int = 0

    def validate(self) -> None:
        if self.optimizer != "adam":
            raise DataValidationError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss not in ("rmse", "ranking"):
            raise DataValidationError(f"unsupported loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise DataValidationError("bad training hyperparameters")

    def to_json(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "recurrent_layers": self.recurrent_layers,
            "attention_heads": self.attention_heads,
            "attention_unroll_steps": self.attention_unroll_steps,
            "optimizer": self.optimizer,
            "loss": self.loss,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


@dataclass
class CostModel:
    kind: str
    estimator: Any
    config: GBDTConfig | TrainConfig
    feature_layout_version: str = FLAT_LAYOUT_VERSION
    provenance: dict = field(default_factory=dict)
    hw_rewrite: tuple[tuple[float, ...], tuple[float, ...]] | None = None


@dataclass(frozen=True)
class TrainReport:
    kind: str
    n_train: int
    n_test: int
    train_rmse: float
    val_rmse: float | None
    val_pca: float | None
    curve: tuple = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_rmse": self.train_rmse,
            "val_rmse": self.val_rmse,
            "val_pca": self.val_pca,
            "curve": [list(entry) for entry in self.curve],
        }


@dataclass(frozen=True)
class EvalReport:
    kind: str
    train_rmse: float
    test_rmse: float
    test_pairwise_accuracy: float | None
    test_top1: float | None
    test_top5: float | None
    tasks_evaluated: int
    tasks_skipped: int

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
            "test_pairwise_accuracy": self.test_pairwise_accuracy,
            "test_top1": self.test_top1,
            "test_top5": self.test_top5,
            "tasks_evaluated": self.tasks_evaluated,
            "tasks_skipped": self.tasks_skipped,
        }


def dataset_fingerprint(ds: Dataset) -> str:
    return hashlib.sha256(dumps_dataset(ds).encode("utf-8")).hexdigest()


def _usable_ids(ds: Dataset, ids: frozenset[str]) -> list[str]:
    """Dataset-ordered record ids with a defined label (non-error, costed)."""
    out = []
    for rid in ordered_ids(ds, ids):
        rec = ds.record_by_id[rid]
        if not rec.error_flag and rec.mean_cost is not None:
            out.append(rid)
    return out


def _provenance(ds: Dataset, assignment: SplitAssignment, seed: int) -> dict:
    return {
        "dataset_sha256": dataset_fingerprint(ds),
        "split_strategy": assignment.strategy,
        "split_test_ratio": assignment.test_ratio,
        "split_seed": assignment.seed,
        "train_seed": seed,
        "targets": sorted(hw.target_id for hw in ds.hardware),
    }


def train_gbdt(
    ds: Dataset, assignment: SplitAssignment, cfg: GBDTConfig | None = None
) -> tuple[CostModel, TrainReport]:
    cfg = cfg or GBDTConfig()
    train_ids = _usable_ids(ds, assignment.train_ids)
    test_ids = _usable_ids(ds, assignment.test_ids)
    if not train_ids:
        raise DataValidationError("no trainable records on the train side")
    X_train, y_train = encode_flat_batch(ds, train_ids)
    eval_set = None
    if test_ids:
        eval_set = encode_flat_batch(ds, test_ids)
    est = GradientBoostedTrees(
        num_trees=cfg.num_trees,
        max_depth=cfg.max_depth,
        learning_rate=cfg.learning_rate,
        min_samples_leaf=cfg.min_samples_leaf,
    )
    est.fit(X_train, y_train, eval_set=eval_set)
    model = CostModel(
        kind="gbdt",
        estimator=est,
        config=cfg,
        provenance=_provenance(ds, assignment, seed=0),
    )
    report = _flat_report("gbdt", est, X_train, y_train, eval_set, len(test_ids))
    return model, report


def train_mlp(
    ds: Dataset, assignment: SplitAssignment, cfg: TrainConfig | None = None
) -> tuple[CostModel, TrainReport]:
    cfg = cfg or TrainConfig()
    cfg.validate()
    train_ids = _usable_ids(ds, assignment.train_ids)
    test_ids = _usable_ids(ds, assignment.test_ids)
    if not train_ids:
        raise DataValidationError("no trainable records on the train side")
    X_train, y_train = encode_flat_batch(ds, train_ids)
    eval_set = encode_flat_batch(ds, test_ids) if test_ids else None
    est = CostMLP(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        loss=cfg.loss,
        seed=cfg.seed,
    )
    est.fit(X_train, y_train, eval_set=eval_set)
    model = CostModel(
        kind="mlp",
        estimator=est,
        config=cfg,
        provenance=_provenance(ds, assignment, cfg.seed),
    )
    report = _flat_report("mlp", est, X_train, y_train, eval_set, len(test_ids))
    return model, report


def train_tuner(
    ds: Dataset, assignment: SplitAssignment, cfg: TrainConfig | None = None
) -> tuple[CostModel, TrainReport]:
    cfg = cfg or TrainConfig()
    cfg.validate()
    train_ids = _usable_ids(ds, assignment.train_ids)
    test_ids = _usable_ids(ds, assignment.test_ids)
    if not train_ids:
        raise DataValidationError("no trainable records on the train side")
    seq_train, y_train = encode_sequence_batch(ds, train_ids)
    eval_set = None
    eval_groups = None
    if test_ids:
        eval_set = encode_sequence_batch(ds, test_ids)
        eval_groups = [ds.record_by_id[rid].task_id for rid in test_ids]
    est = RecurrentAttentionTuner(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        recurrent_layers=cfg.recurrent_layers,
        attention_heads=cfg.attention_heads,
        attention_unroll_steps=cfg.attention_unroll_steps,
        loss=cfg.loss,
        seed=cfg.seed,
    )
    est.fit(seq_train, y_train, eval_set=eval_set, eval_groups=eval_groups)
    model = CostModel(
        kind="tuner",
        estimator=est,
        config=cfg,
        provenance=_provenance(ds, assignment, cfg.seed),
    )
    train_pred = est.predict(seq_train)
    val_rmse = val_pca = None
    if est.train_curve_:
        _, val_rmse, val_pca = est.train_curve_[-1]
    elif eval_set is not None:
        val_pred = est.predict(eval_set[0])
        val_rmse = rmse(eval_set[1], val_pred)
    report = TrainReport(
        kind="tuner",
        n_train=len(train_ids),
        n_test=len(test_ids),
        train_rmse=rmse(y_train, train_pred),
        val_rmse=val_rmse,
        val_pca=val_pca,
        curve=tuple(est.train_curve_),
    )
    return model, report


def _flat_report(kind, est, X_train, y_train, eval_set, n_test) -> TrainReport:
    train_pred = est.predict(X_train)
    val_rmse = None
    if eval_set is not None:
        val_rmse = rmse(eval_set[1], est.predict(eval_set[0]))
    return TrainReport(
        kind=kind,
        n_train=X_train.shape[0],
        n_test=n_test,
        train_rmse=rmse(y_train, train_pred),
        val_rmse=val_rmse,
        val_pca=None,
        curve=tuple(tuple(entry) for entry in getattr(est, "train_curve_", [])),
    )


# -- prediction --------------------------------------------------------------


def _apply_rewrite_flat(model: CostModel, X: np.ndarray) -> np.ndarray:
    if model.hw_rewrite is None:
        return X
    values, mask = model.hw_rewrite
    X = X.copy()
    X[:, HW_VALUE_SLICE] = np.asarray(values)
    X[:, HW_MASK_SLICE] = np.asarray(mask)
    return X


def _apply_rewrite_sequences(
    model: CostModel, seqs: list[StepSequence]
) -> list[StepSequence]:
    if model.hw_rewrite is None:
        return seqs
    values, mask = model.hw_rewrite
    out = []
    for seq in seqs:
        ctx = seq.context.copy()
        ctx[CONTEXT_HW_VALUE_SLICE] = np.asarray(values)
        ctx[CONTEXT_HW_MASK_SLICE] = np.asarray(mask)
        out.append(StepSequence(steps=seq.steps, context=ctx))
    return out


def _check_layout(model: CostModel) -> None:
    if model.feature_layout_version != FLAT_LAYOUT_VERSION:
        raise DataValidationError(
            f"model expects feature layout {model.feature_layout_version!r}, "
            f"but the encoders produce {FLAT_LAYOUT_VERSION!r}"
        )


def predict_records(
    model: CostModel, ds: Dataset, record_ids: list[str]
) -> np.ndarray:
    """Model scores for the given records (higher means a better schedule)."""
    _check_layout(model)
    if model.kind == "tuner":
        seqs, _ = encode_sequence_batch(ds, record_ids)
        return model.estimator.predict(_apply_rewrite_sequences(model, seqs))
    X, _ = encode_flat_batch(ds, record_ids)
    return model.estimator.predict(_apply_rewrite_flat(model, X))


def make_schedule_scorer(model: CostModel, task: Task, ds: Dataset):
    """Adapter giving the search loop a batch scorer over ScheduleConfigs."""
    _check_layout(model)
    hw = ds.hardware_of(task)

    def scorer(schedules: list[ScheduleConfig]) -> np.ndarray:
        if not schedules:
            return np.zeros(0)
        if model.kind == "tuner":
            seqs = [encode_schedule_steps(task.kernel, s, hw) for s in schedules]
            return model.estimator.predict(_apply_rewrite_sequences(model, seqs))
        X = np.stack([encode_schedule(task.kernel, s, hw) for s in schedules])
        return model.estimator.predict(_apply_rewrite_flat(model, X))

    return scorer


# -- evaluation ---------------------------------------------------------------


def per_task_metrics(
    model: CostModel, ds: Dataset, assignment: SplitAssignment
) -> list[dict]:
    """Ranking metrics per test task, in dataset task order.

    Tasks with fewer than two labeled test records get null metrics (there
    is nothing to rank). Top-k clamps k to the task's record count.
    """
    test_ids = _usable_ids(ds, assignment.test_ids)
    if not test_ids:
        raise DataValidationError("no labeled records on the test side")
    test_pred = predict_records(model, ds, test_ids)
    _, y_test = encode_flat_batch(ds, test_ids)
    by_task: dict[str, list[int]] = {}
    for i, rid in enumerate(test_ids):
        by_task.setdefault(ds.record_by_id[rid].task_id, []).append(i)
    rows = []
    for task in ds.tasks:
        idx = by_task.get(task.task_id)
        if idx is None:
            continue
        row: dict = {"task_id": task.task_id, "n_records": len(idx)}
        if len(idx) < 2:
            row.update({"pairwise_accuracy": None, "top1": None, "top5": None})
        else:
            y_t = y_test[idx]
            p_t = test_pred[idx]
            row.update(
                {
                    "pairwise_accuracy": pairwise_comparison_accuracy(y_t, p_t),
                    "top1": top_k_score(y_t, p_t, 1),
                    "top5": top_k_score(y_t, p_t, min(5, len(idx))),
                }
            )
        rows.append(row)
    return rows


def evaluate(model: CostModel, ds: Dataset, assignment: SplitAssignment) -> EvalReport:
    """Regression error plus per-task ranking quality on the test side.

    Pairwise accuracy and top-k are averaged over test tasks with at least
    two labeled records; tasks below that are counted as skipped.
    """
    train_ids = _usable_ids(ds, assignment.train_ids)
    test_ids = _usable_ids(ds, assignment.test_ids)
    if not train_ids or not test_ids:
        raise DataValidationError("evaluate needs labeled records on both sides")
    train_pred = predict_records(model, ds, train_ids)
    _, y_train = encode_flat_batch(ds, train_ids)
    test_pred = predict_records(model, ds, test_ids)
    _, y_test = encode_flat_batch(ds, test_ids)

    rows = per_task_metrics(model, ds, assignment)
    scored = [r for r in rows if r["pairwise_accuracy"] is not None]
    return EvalReport(
        kind=model.kind,
        train_rmse=rmse(y_train, train_pred),
        test_rmse=rmse(y_test, test_pred),
        test_pairwise_accuracy=(
            float(np.mean([r["pairwise_accuracy"] for r in scored])) if scored else None
        ),
        test_top1=float(np.mean([r["top1"] for r in scored])) if scored else None,
        test_top5=float(np.mean([r["top5"] for r in scored])) if scored else None,
        tasks_evaluated=len(scored),
        tasks_skipped=len(rows) - len(scored),
    )


# -- serialization ------------------------------------------------------------


def _config_json(model: CostModel) -> dict:
    return model.config.to_json()


def _estimator_for(kind: str, config: dict):
    if kind == "gbdt":
        cfg = GBDTConfig.from_json(config)
        return (
            GradientBoostedTrees(
                num_trees=cfg.num_trees,
                max_depth=cfg.max_depth,
                learning_rate=cfg.learning_rate,
                min_samples_leaf=cfg.min_samples_leaf,
            ),
            cfg,
        )
    tcfg = TrainConfig.from_json(config)
    if kind == "mlp":
        est = CostMLP(
            batch_size=tcfg.batch_size,
            epochs=tcfg.epochs,
            learning_rate=tcfg.learning_rate,
            loss=tcfg.loss,
            seed=tcfg.seed,
        )
    elif kind == "tuner":
        est = RecurrentAttentionTuner(
            batch_size=tcfg.batch_size,
            epochs=tcfg.epochs,
            learning_rate=tcfg.learning_rate,
            recurrent_layers=tcfg.recurrent_layers,
            attention_heads=tcfg.attention_heads,
            attention_unroll_steps=tcfg.attention_unroll_steps,
            loss=tcfg.loss,
            seed=tcfg.seed,
        )
    else:
        raise DataValidationError(f"unknown model kind {kind!r}")
    return est, tcfg


_DTYPE_TAGS = {"<f8": "<f8", "<i8": "<i8", "<i4": "<i4"}


def _normalize_array(arr: np.ndarray) -> tuple[np.ndarray, str]:
    if arr.dtype.kind == "f":
        out = np.ascontiguousarray(arr, dtype="<f8")
        return out, "<f8"
    if arr.dtype.kind in "iu":
        if arr.dtype.itemsize <= 4:
            return np.ascontiguousarray(arr, dtype="<i4"), "<i4"
        return np.ascontiguousarray(arr, dtype="<i8"), "<i8"
    raise DataValidationError(f"unsupported weight dtype {arr.dtype}")


def save_model(model: CostModel, path: str | Path) -> None:
    """Write magic, header length, JSON header, then raw little-endian arrays."""
    weights = model.estimator.get_weights()
    manifest = []
    blobs = []
    for name in sorted(weights):
        arr, tag = _normalize_array(np.asarray(weights[name]))
        manifest.append({"name": name, "dtype": tag, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "kind": model.kind,
        "config": _config_json(model),
        "feature_layout_version": model.feature_layout_version,
        "provenance": model.provenance,
        "hw_rewrite": (
            [list(model.hw_rewrite[0]), list(model.hw_rewrite[1])]
            if model.hw_rewrite is not None
            else None
        ),
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_model(path: str | Path) -> CostModel:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MODEL_MAGIC):
        raise DataValidationError(f"{path}: not a model file (bad magic)")
    offset = len(_MODEL_MAGIC)
    if len(raw) < offset + 4:
        raise DataValidationError(f"{path}: truncated model header")
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataValidationError(f"{path}: malformed model header: {exc}") from exc
    offset += header_len
    weights: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise DataValidationError(f"{path}: truncated weight payload")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape)
        weights[entry["name"]] = arr.copy()
        offset += nbytes
    est, cfg = _estimator_for(header["kind"], header["config"])
    est.set_weights(weights)
    hw_rewrite = None
    if header.get("hw_rewrite") is not None:
        values, mask = header["hw_rewrite"]
        hw_rewrite = (tuple(float(v) for v in values), tuple(float(m) for m in mask))
    return CostModel(
        kind=header["kind"],
        estimator=est,
        config=cfg,
        feature_layout_version=header["feature_layout_version"],
        provenance=header.get("provenance", {}),
        hw_rewrite=hw_rewrite,
    )


def with_rewrite(
    model: CostModel, values: tuple[float, ...], mask: tuple[float, ...]
) -> CostModel:
    """Copy of the model that predicts as if records ran on other hardware."""
    return replace(model, hw_rewrite=(tuple(values), tuple(mask)))
