"""Operator cost accounting and per-operator dataset summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (
    CONV_OPS,
    ELEMENTWISE_BINARY,
    ELEMENTWISE_UNARY,
    OPERATOR_REGISTRY,
    Dataset,
    Kernel,
    validate_kernel,
)
from .errors import DataValidationError

FLOP_LIMIT = 2**63

# Per-element operation cost for elementwise kernels. Transcendentals are
# charged as a handful of primitive flops.
ELEMENTWISE_OP_COST = {
    "elementwise-add": 1,
    "elementwise-multiply": 1,
    "elementwise-divide": 1,
    "relu": 1,
    "tanh": 4,
    "fast-tanh": 4,
    "softmax-norm": 5,
}


def _prod(values: tuple[int, ...]) -> int:
    out = 1
    for v in values:
        out *= v
    return out


def flop_count(kernel: Kernel) -> int:
    """Exact flop count for one kernel execution.

    Elementwise ops charge a per-element cost, matmul and conv2d use the
    standard multiply-accumulate counts, and the winograd variant is charged
    half the direct conv count. Counts above 2**63 raise rather than wrap.
    """
    validate_kernel(kernel)
    op = kernel.op
    if op in ELEMENTWISE_UNARY or op in ELEMENTWISE_BINARY:
        count = _prod(kernel.output_shape) * ELEMENTWISE_OP_COST[op]
    elif op == "matmul":
        (m, k), (_, n) = kernel.input_shapes
        count = 2 * m * k * n
    elif op in CONV_OPS:
        data, weight = kernel.input_shapes
        n, _, _, c_in = data
        k_h, k_w, _, c_out = weight
        _, h_out, w_out, _ = kernel.output_shape
        count = 2 * n * h_out * w_out * c_out * k_h * k_w * c_in
        if op == "conv2d-winograd":
            count //= 2
    else:  # pragma: no cover - validate_kernel guards the registry
        raise DataValidationError(f"unhandled op {op!r}")
    if count > FLOP_LIMIT:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: flop count {count} exceeds 2**63"
        )
    if count < 1:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: flop count must be positive"
        )
    return count


@dataclass
class OpCharacterization:
    """Summary of one operator across a dataset.

    Execution times are reported in milliseconds; gflops entries are flop
    counts scaled by 1e9, maximized over valid records.
    """

    op: str
    shape_count_per_class: dict[str, int] = field(default_factory=dict)
    max_gflops_per_class: dict[str, float] = field(default_factory=dict)
    best_shape: tuple[int, ...] | None = None
    mean_exec_time_ms_per_target: dict[str, float] = field(default_factory=dict)
    valid_record_count_per_target: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "shape_count_per_class": dict(self.shape_count_per_class),
            "max_gflops_per_class": dict(self.max_gflops_per_class),
            "best_shape": list(self.best_shape) if self.best_shape else None,
            "mean_exec_time_ms_per_target": dict(self.mean_exec_time_ms_per_target),
            "valid_record_count_per_target": dict(self.valid_record_count_per_target),
        }


def characterize(ds: Dataset) -> list[OpCharacterization]:
    """Per-operator shape counts, peak gflops and mean execution times.

    The result is independent of record order: means are accumulated over
    sorted cost lists so shuffled datasets characterize identically.
    """
    by_op: dict[str, OpCharacterization] = {}
    shapes_seen: dict[str, dict[str, set[tuple[int, ...]]]] = {}
    costs: dict[str, dict[str, list[float]]] = {}
    best: dict[str, tuple[float, tuple[int, ...]]] = {}

    for task in ds.tasks:
        op = task.kernel.op
        entry = by_op.get(op)
        if entry is None:
            entry = by_op[op] = OpCharacterization(op=op)
            shapes_seen[op] = {}
            costs[op] = {}
        hw_class = ds.hardware_of(task).hardware_class
        shapes_seen[op].setdefault(hw_class, set()).add(task.kernel.output_shape)

        valid = ds.valid_records_of_task(task.task_id)
        if not valid:
            continue
        gflops = flop_count(task.kernel) / 1e9
        prev = entry.max_gflops_per_class.get(hw_class)
        if prev is None or gflops > prev:
            entry.max_gflops_per_class[hw_class] = gflops
        prev_best = best.get(op)
        if prev_best is None or gflops > prev_best[0]:
            best[op] = (gflops, task.kernel.output_shape)
        costs[op].setdefault(task.target, []).extend(
            rec.mean_cost for rec in valid  # type: ignore[misc]
        )

    for op, entry in by_op.items():
        entry.shape_count_per_class = {
            cls: len(shapes) for cls, shapes in sorted(shapes_seen[op].items())
        }
        if op in best:
            entry.best_shape = best[op][1]
        for target in sorted(costs[op]):
            values = np.sort(np.asarray(costs[op][target], dtype=np.float64))
            entry.mean_exec_time_ms_per_target[target] = float(
                values.sum() / values.size * 1e3
            )
            entry.valid_record_count_per_target[target] = int(values.size)

    return [by_op[op] for op in OPERATOR_REGISTRY if op in by_op]


def characterization_table(entries: list[OpCharacterization]) -> str:
    """Aligned-column text rendering of characterize output."""
    headers = [
        "op",
        "shapes(CPU)",
        "shapes(GPU)",
        "max_gflops(CPU)",
        "max_gflops(GPU)",
        "best_shape",
        "mean_ms_per_target",
    ]
    rows = []
    for e in entries:
        def fmt_gflops(cls: str) -> str:
            v = e.max_gflops_per_class.get(cls)
            return f"{v:.6g}" if v is not None else "NA"

        means = " ".join(
            f"{target}={e.mean_exec_time_ms_per_target[target]:.6g}"
            for target in sorted(e.mean_exec_time_ms_per_target)
        )
        rows.append(
            [
                e.op,
                str(e.shape_count_per_class.get("CPU", 0)),
                str(e.shape_count_per_class.get("GPU", 0)),
                fmt_gflops("CPU"),
                fmt_gflops("GPU"),
                "x".join(map(str, e.best_shape)) if e.best_shape else "NA",
                means or "NA",
            ]
        )
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in rows)) if rows else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines) + "\n"
