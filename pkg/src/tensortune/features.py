"""Model-facing encodings of measurement records.

Two encodings are provided: a fixed 47-slot flat vector for tabular models
and a variable-length step sequence (plus a static context vector) for the
recurrent tuner. Both put every integer knob on a log2 scale.

Flat layout (FLAT_LAYOUT_VERSION):

    [ 0:10)  operator one-hot, registry order
    [10:16)  log2 output dims, padded to 6 slots
    [16:17)  log2 flop count
    [17:25)  log2 tile factors, flattened per axis, padded to 8 slots
    [25:26)  log2 unroll factor
    [26:27)  log2 vectorize width
    [27:28)  log2 threads_x (0 when unbound)
    [28:29)  log2 threads_y (0 when unbound)
    [29:38)  hardware feature values
    [38:47)  hardware presence mask

The context vector is the kernel+hardware slice of the same layout (35
slots): operator one-hot, dims, flops, hardware values, hardware mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import (
    MAX_SHAPE_DIMS,
    MAX_TILE_SLOTS,
    OPERATOR_REGISTRY,
    Dataset,
    Kernel,
    MeasurementRecord,
    ScheduleConfig,
)
from .errors import DataValidationError
from .hardware import N_FEATURE_SLOTS, HardwareParams, feature_vector
from .workload import flop_count

FLAT_LAYOUT_VERSION = "flat.v1"

N_OPS = len(OPERATOR_REGISTRY)
FLAT_LENGTH = N_OPS + MAX_SHAPE_DIMS + 1 + MAX_TILE_SLOTS + 4 + 2 * N_FEATURE_SLOTS

OP_SLICE = slice(0, N_OPS)
DIM_SLICE = slice(N_OPS, N_OPS + MAX_SHAPE_DIMS)
FLOP_SLOT = N_OPS + MAX_SHAPE_DIMS
TILE_SLICE = slice(FLOP_SLOT + 1, FLOP_SLOT + 1 + MAX_TILE_SLOTS)
UNROLL_SLOT = TILE_SLICE.stop
VECTORIZE_SLOT = UNROLL_SLOT + 1
THREADS_X_SLOT = VECTORIZE_SLOT + 1
THREADS_Y_SLOT = THREADS_X_SLOT + 1
HW_VALUE_SLICE = slice(THREADS_Y_SLOT + 1, THREADS_Y_SLOT + 1 + N_FEATURE_SLOTS)
HW_MASK_SLICE = slice(HW_VALUE_SLICE.stop, HW_VALUE_SLICE.stop + N_FEATURE_SLOTS)

CONTEXT_LENGTH = N_OPS + MAX_SHAPE_DIMS + 1 + 2 * N_FEATURE_SLOTS
CONTEXT_HW_VALUE_SLICE = slice(N_OPS + MAX_SHAPE_DIMS + 1, N_OPS + MAX_SHAPE_DIMS + 1 + N_FEATURE_SLOTS)
CONTEXT_HW_MASK_SLICE = slice(CONTEXT_HW_VALUE_SLICE.stop, CONTEXT_HW_VALUE_SLICE.stop + N_FEATURE_SLOTS)

# Step kinds for the sequence encoding, in one-hot order.
STEP_KINDS = ("tile", "unroll", "vectorize", "bind")
STEP_WIDTH = len(STEP_KINDS) + 2  # one-hot | log2 knob value | axis index
MAX_SEQUENCE_STEPS = 32


@dataclass
class StepSequence:
    """Ordered schedule steps plus the static kernel+hardware context."""

    steps: np.ndarray  # (n_steps, STEP_WIDTH) float64
    context: np.ndarray  # (CONTEXT_LENGTH,) float64

    def __post_init__(self) -> None:
        self.steps = np.asarray(self.steps, dtype=np.float64)
        self.context = np.asarray(self.context, dtype=np.float64)
        if self.steps.ndim != 2 or self.steps.shape[1] != STEP_WIDTH:
            raise DataValidationError(
                f"steps must be (n, {STEP_WIDTH}), got {self.steps.shape}"
            )
        if not 1 <= self.steps.shape[0] <= MAX_SEQUENCE_STEPS:
            raise DataValidationError(
                f"sequences must have 1..{MAX_SEQUENCE_STEPS} steps, "
                f"got {self.steps.shape[0]}"
            )
        if self.context.shape != (CONTEXT_LENGTH,):
            raise DataValidationError(
                f"context must have {CONTEXT_LENGTH} slots, got {self.context.shape}"
            )


def _kernel_slots(kernel: Kernel) -> tuple[np.ndarray, np.ndarray, float]:
    op_onehot = np.zeros(N_OPS, dtype=np.float64)
    op_onehot[OPERATOR_REGISTRY.index(kernel.op)] = 1.0
    dims = np.zeros(MAX_SHAPE_DIMS, dtype=np.float64)
    for i, d in enumerate(kernel.output_shape):
        dims[i] = math.log2(d)
    return op_onehot, dims, math.log2(flop_count(kernel))


def encode_schedule(
    kernel: Kernel, schedule: ScheduleConfig, hw: HardwareParams
) -> np.ndarray:
    """Flat 47-slot encoding of a (kernel, schedule, hardware) triple."""
    op_onehot, dims, log_flops = _kernel_slots(kernel)
    flat = np.zeros(FLAT_LENGTH, dtype=np.float64)
    flat[OP_SLICE] = op_onehot
    flat[DIM_SLICE] = dims
    flat[FLOP_SLOT] = log_flops

    factors = [f for axis in schedule.tile_factors for f in axis]
    if len(factors) > MAX_TILE_SLOTS:
        raise DataValidationError(
            f"schedule has {len(factors)} tile factors, cap is {MAX_TILE_SLOTS}"
        )
    for i, f in enumerate(factors):
        flat[TILE_SLICE.start + i] = math.log2(f)
    flat[UNROLL_SLOT] = math.log2(schedule.unroll_factor)
    flat[VECTORIZE_SLOT] = math.log2(schedule.vectorize_width)
    if schedule.thread_binding is not None:
        tx, ty = schedule.thread_binding
        flat[THREADS_X_SLOT] = math.log2(tx)
        flat[THREADS_Y_SLOT] = math.log2(ty)

    values, mask = feature_vector(hw).as_arrays()
    flat[HW_VALUE_SLICE] = values
    flat[HW_MASK_SLICE] = mask.astype(np.float64)
    return flat


def encode_context(kernel: Kernel, hw: HardwareParams) -> np.ndarray:
    """Kernel+hardware slice of the flat layout (35 slots)."""
    op_onehot, dims, log_flops = _kernel_slots(kernel)
    values, mask = feature_vector(hw).as_arrays()
    return np.concatenate(
        [op_onehot, dims, [log_flops], values, mask.astype(np.float64)]
    )


def encode_schedule_steps(
    kernel: Kernel, schedule: ScheduleConfig, hw: HardwareParams
) -> StepSequence:
    """Sequence encoding: tile steps per axis, then unroll, vectorize, bind.

    Each tile factor becomes its own step carrying the axis index. Unroll and
    vectorize steps are always emitted (axis -1); bind emits one step per
    thread dimension when a binding is present.
    """
    rows: list[list[float]] = []

    def step(kind: str, value: int, axis: float) -> None:
        onehot = [0.0] * len(STEP_KINDS)
        onehot[STEP_KINDS.index(kind)] = 1.0
        rows.append([*onehot, math.log2(value), axis])

    for axis, factors in enumerate(schedule.tile_factors):
        for f in factors:
            step("tile", f, float(axis))
    step("unroll", schedule.unroll_factor, -1.0)
    step("vectorize", schedule.vectorize_width, -1.0)
    if schedule.thread_binding is not None:
        tx, ty = schedule.thread_binding
        step("bind", tx, 0.0)
        step("bind", ty, 1.0)

    return StepSequence(
        steps=np.asarray(rows, dtype=np.float64),
        context=encode_context(kernel, hw),
    )


def _resolve(rec: MeasurementRecord, ds: Dataset):
    task = ds.task_by_id.get(rec.task_id)
    if task is None:
        raise DataValidationError(
            f"record {rec.record_id!r}: unresolvable task {rec.task_id!r}"
        )
    hw = ds.hardware_by_id.get(task.target)
    if hw is None:
        raise DataValidationError(
            f"record {rec.record_id!r}: unresolvable target {task.target!r}"
        )
    return task, hw


def encode_flat(rec: MeasurementRecord, ds: Dataset) -> np.ndarray:
    task, hw = _resolve(rec, ds)
    return encode_schedule(task.kernel, rec.schedule, hw)


def encode_sequence(rec: MeasurementRecord, ds: Dataset) -> StepSequence:
    task, hw = _resolve(rec, ds)
    return encode_schedule_steps(task.kernel, rec.schedule, hw)


def label(rec: MeasurementRecord, ds: Dataset) -> float:
    """Task-normalized score in (0, 1]: best task cost over this cost."""
    if rec.error_flag or rec.mean_cost is None:
        raise DataValidationError(
            f"record {rec.record_id!r}: labels are undefined for error records"
        )
    task, _ = _resolve(rec, ds)
    costs = [
        r.mean_cost
        for r in ds.valid_records_of_task(task.task_id)
        if r.mean_cost is not None
    ]
    if rec.mean_cost not in costs:
        costs.append(rec.mean_cost)
    return min(costs) / rec.mean_cost


def encode_flat_batch(
    ds: Dataset, record_ids: list[str]
) -> tuple[np.ndarray, np.ndarray]:
    """(features, labels) arrays for the given non-error records."""
    rows = np.empty((len(record_ids), FLAT_LENGTH), dtype=np.float64)
    ys = np.empty(len(record_ids), dtype=np.float64)
    for i, rid in enumerate(record_ids):
        rec = ds.record_by_id[rid]
        rows[i] = encode_flat(rec, ds)
        ys[i] = label(rec, ds)
    return rows, ys


def encode_sequence_batch(
    ds: Dataset, record_ids: list[str]
) -> tuple[list[StepSequence], np.ndarray]:
    seqs: list[StepSequence] = []
    ys = np.empty(len(record_ids), dtype=np.float64)
    for i, rid in enumerate(record_ids):
        rec = ds.record_by_id[rid]
        seqs.append(encode_sequence(rec, ds))
        ys[i] = label(rec, ds)
    return seqs, ys


def decode_steps(seq: StepSequence) -> dict[str, list[tuple[int, int]] | int | None]:
    """Recover the schedule knobs from a step sequence (round-trip checks)."""
    tiles: list[tuple[int, int]] = []
    unroll = vectorize = 1
    binding: dict[int, int] = {}
    for row in seq.steps:
        kind = STEP_KINDS[int(np.argmax(row[: len(STEP_KINDS)]))]
        value = int(round(2 ** row[len(STEP_KINDS)]))
        axis = int(row[len(STEP_KINDS) + 1])
        if kind == "tile":
            tiles.append((axis, value))
        elif kind == "unroll":
            unroll = value
        elif kind == "vectorize":
            vectorize = value
        else:
            binding[axis] = value
    return {
        "tiles": tiles,
        "unroll": unroll,
        "vectorize": vectorize,
        "binding": (binding[0], binding[1]) if binding else None,
    }
