"""Dataset schema and line-delimited persistence.

A dataset ties together three entity kinds: hardware targets, tasks (a kernel
bound to a target) and measurement records (a schedule tried on a task with
its measured cost). On disk a dataset is UTF-8 text, one object per line,
with a format header on line 1; see save_dataset / load_dataset.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import DataValidationError
from .hardware import HardwareParams

FORMAT_TAG = "tensortune.v1"

# Operator registry. The tuple order is canonical: featurization one-hots
# follow it and characterize reports iterate it.
OPERATOR_REGISTRY = (
    "elementwise-add",
    "elementwise-multiply",
    "elementwise-divide",
    "relu",
    "tanh",
    "fast-tanh",
    "softmax-norm",
    "matmul",
    "conv2d",
    "conv2d-winograd",
)

ELEMENTWISE_UNARY = frozenset({"relu", "tanh", "fast-tanh", "softmax-norm"})
ELEMENTWISE_BINARY = frozenset(
    {"elementwise-add", "elementwise-multiply", "elementwise-divide"}
)
CONV_OPS = frozenset({"conv2d", "conv2d-winograd"})

# Modeling caps shared with the feature layout: shapes are padded to 6 dims
# and flattened tile factors to 8 slots, so anything larger is rejected at
# validation time rather than failing later inside the encoder.
MAX_SHAPE_DIMS = 6
MAX_TILE_SLOTS = 8


@dataclass(frozen=True)
class ScheduleConfig:
    """One point in a schedule space.

    tile_factors holds one factor list per output loop axis; the per-axis
    product must divide that axis's extent. thread_binding is only meaningful
    on GPU-class targets.
    """

    tile_factors: tuple[tuple[int, ...], ...]
    unroll_factor: int = 1
    vectorize_width: int = 1
    thread_binding: tuple[int, int] | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "tile_factors": [list(fs) for fs in self.tile_factors],
            "unroll_factor": self.unroll_factor,
            "vectorize_width": self.vectorize_width,
        }
        if self.thread_binding is not None:
            out["thread_binding"] = list(self.thread_binding)
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ScheduleConfig":
        known = {"tile_factors", "unroll_factor", "vectorize_width", "thread_binding"}
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(
                f"schedule has unknown fields: {sorted(unknown)}"
            )
        try:
            tiles = tuple(tuple(int(f) for f in fs) for fs in obj["tile_factors"])
            binding = obj.get("thread_binding")
            if binding is not None:
                if len(binding) != 2:
                    raise DataValidationError(
                        "thread_binding must hold exactly two extents"
                    )
                binding = (int(binding[0]), int(binding[1]))
            return cls(
                tile_factors=tiles,
                unroll_factor=int(obj.get("unroll_factor", 1)),
                vectorize_width=int(obj.get("vectorize_width", 1)),
                thread_binding=binding,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed schedule: {exc}") from exc


@dataclass
class Kernel:
    """A tensor operator instance: op name, shapes and integer attributes."""

    kernel_id: str
    op: str
    input_shapes: tuple[tuple[int, ...], ...]
    output_shape: tuple[int, ...]
    attributes: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "kernel_id": self.kernel_id,
            "op": self.op,
            "input_shapes": [list(s) for s in self.input_shapes],
            "output_shape": list(self.output_shape),
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Kernel":
        known = {"kernel_id", "op", "input_shapes", "output_shape", "attributes"}
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(f"kernel has unknown fields: {sorted(unknown)}")
        try:
            return cls(
                kernel_id=str(obj["kernel_id"]),
                op=str(obj["op"]),
                input_shapes=tuple(
                    tuple(int(d) for d in s) for s in obj["input_shapes"]
                ),
                output_shape=tuple(int(d) for d in obj["output_shape"]),
                attributes={str(k): int(v) for k, v in obj.get("attributes", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed kernel: {exc}") from exc


@dataclass
class Task:
    """A kernel pinned to a concrete hardware target."""

    task_id: str
    kernel: Kernel
    target: str
    network_tag: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "type": "task",
            "task_id": self.task_id,
            "kernel": self.kernel.to_json(),
            "target": self.target,
            "network_tag": self.network_tag,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Task":
        known = {"type", "task_id", "kernel", "target", "network_tag"}
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(f"task has unknown fields: {sorted(unknown)}")
        try:
            return cls(
                task_id=str(obj["task_id"]),
                kernel=Kernel.from_json(obj["kernel"]),
                target=str(obj["target"]),
                network_tag=str(obj.get("network_tag", "")),
            )
        except (KeyError, TypeError) as exc:
            raise DataValidationError(f"malformed task: {exc}") from exc


@dataclass
class MeasurementRecord:
    """One schedule measurement. error_flag marks failed runs (no cost)."""

    record_id: str
    task_id: str
    schedule: ScheduleConfig
    mean_cost: float | None
    measured_flops: int
    error_flag: bool = False

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "type": "record",
            "record_id": self.record_id,
            "task_id": self.task_id,
            "schedule": self.schedule.to_json(),
            "measured_flops": self.measured_flops,
            "error_flag": self.error_flag,
        }
        if not self.error_flag and self.mean_cost is not None:
            out["mean_cost"] = self.mean_cost
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "MeasurementRecord":
        known = {
            "type",
            "record_id",
            "task_id",
            "schedule",
            "mean_cost",
            "measured_flops",
            "error_flag",
        }
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(f"record has unknown fields: {sorted(unknown)}")
        try:
            cost = obj.get("mean_cost")
            return cls(
                record_id=str(obj["record_id"]),
                task_id=str(obj["task_id"]),
                schedule=ScheduleConfig.from_json(obj["schedule"]),
                mean_cost=float(cost) if cost is not None else None,
                measured_flops=int(obj["measured_flops"]),
                error_flag=bool(obj.get("error_flag", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed record: {exc}") from exc


def validate_kernel(kernel: Kernel) -> None:
    """Check operator membership, arity and shape consistency."""
    if not kernel.kernel_id:
        raise DataValidationError("kernel has an empty kernel_id")
    if kernel.op not in OPERATOR_REGISTRY:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: unknown operator {kernel.op!r}"
        )
    for shape in (*kernel.input_shapes, kernel.output_shape):
        if len(shape) == 0:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: empty shape"
            )
        if len(shape) > MAX_SHAPE_DIMS:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: shapes are capped at "
                f"{MAX_SHAPE_DIMS} dims, got {len(shape)}"
            )
        for dim in shape:
            if dim < 1:
                raise DataValidationError(
                    f"kernel {kernel.kernel_id!r}: dimension {dim} < 1"
                )

    op = kernel.op
    if op in ELEMENTWISE_UNARY:
        if len(kernel.input_shapes) != 1:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: {op} takes exactly one input"
            )
        if kernel.input_shapes[0] != kernel.output_shape:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: {op} input shape must match output"
            )
    elif op in ELEMENTWISE_BINARY:
        if len(kernel.input_shapes) not in (1, 2):
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: {op} takes one or two inputs"
            )
        for shape in kernel.input_shapes:
            if shape != kernel.output_shape:
                raise DataValidationError(
                    f"kernel {kernel.kernel_id!r}: {op} input shapes must match output"
                )
    elif op == "matmul":
        if len(kernel.input_shapes) != 2:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: matmul takes exactly two inputs"
            )
        a, b = kernel.input_shapes
        if len(a) != 2 or len(b) != 2 or len(kernel.output_shape) != 2:
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: matmul shapes must be rank 2"
            )
        if a[1] != b[0] or kernel.output_shape != (a[0], b[1]):
            raise DataValidationError(
                f"kernel {kernel.kernel_id!r}: inconsistent matmul shapes "
                f"{a}x{b} -> {kernel.output_shape}"
            )
    elif op in CONV_OPS:
        _validate_conv(kernel)
    else:  # pragma: no cover - registry and branches kept in sync
        raise DataValidationError(f"kernel {kernel.kernel_id!r}: unhandled op {op!r}")


def _validate_conv(kernel: Kernel) -> None:
    if len(kernel.input_shapes) != 2:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: {kernel.op} takes data and weight inputs"
        )
    data, weight = kernel.input_shapes
    if len(data) != 4 or len(weight) != 4 or len(kernel.output_shape) != 4:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: {kernel.op} shapes must be rank 4 (NHWC)"
        )
    stride = kernel.attributes.get("stride", 1)
    padding = kernel.attributes.get("padding", 0)
    if stride < 1 or padding < 0:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: bad stride/padding ({stride}, {padding})"
        )
    n, h, w, c_in = data
    k_h, k_w, w_cin, c_out = weight
    if w_cin != c_in:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: weight C_in {w_cin} != data C_in {c_in}"
        )
    h_out = (h + 2 * padding - k_h) // stride + 1
    w_out = (w + 2 * padding - k_w) // stride + 1
    if h_out < 1 or w_out < 1:
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: filter does not fit the padded input"
        )
    if kernel.output_shape != (n, h_out, w_out, c_out):
        raise DataValidationError(
            f"kernel {kernel.kernel_id!r}: output shape {kernel.output_shape} "
            f"inconsistent with ({n}, {h_out}, {w_out}, {c_out})"
        )


@dataclass
class Dataset:
    """Immutable-by-convention container with lookup indexes.

    Mutating operations elsewhere in the package always build new Dataset
    values via Dataset.build; the indexes are derived state and excluded from
    equality.
    """

    hardware: list[HardwareParams]
    tasks: list[Task]
    records: list[MeasurementRecord]

    hardware_by_id: dict[str, HardwareParams] = field(
        init=False, repr=False, compare=False
    )
    task_by_id: dict[str, Task] = field(init=False, repr=False, compare=False)
    record_by_id: dict[str, MeasurementRecord] = field(
        init=False, repr=False, compare=False
    )
    records_by_task: dict[str, list[str]] = field(
        init=False, repr=False, compare=False
    )
    tasks_by_target: dict[str, list[str]] = field(
        init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        self.hardware_by_id = {}
        for hw in self.hardware:
            if hw.target_id in self.hardware_by_id:
                raise DataValidationError(f"duplicate target_id {hw.target_id!r}")
            self.hardware_by_id[hw.target_id] = hw
        self.task_by_id = {}
        self.tasks_by_target = {}
        for task in self.tasks:
            if task.task_id in self.task_by_id:
                raise DataValidationError(f"duplicate task_id {task.task_id!r}")
            self.task_by_id[task.task_id] = task
            self.tasks_by_target.setdefault(task.target, []).append(task.task_id)
        self.record_by_id = {}
        self.records_by_task = {task.task_id: [] for task in self.tasks}
        for rec in self.records:
            if rec.record_id in self.record_by_id:
                raise DataValidationError(f"duplicate record_id {rec.record_id!r}")
            self.record_by_id[rec.record_id] = rec
            if rec.task_id in self.records_by_task:
                self.records_by_task[rec.task_id].append(rec.record_id)

    @classmethod
    def build(
        cls,
        hardware: Iterable[HardwareParams],
        tasks: Iterable[Task],
        records: Iterable[MeasurementRecord],
        validate: bool = True,
    ) -> "Dataset":
        ds = cls(list(hardware), list(tasks), list(records))
        if validate:
            ds.validate()
        return ds

    def validate(self) -> None:
        for hw in self.hardware:
            hw.validate()
        seen_pairs: set[tuple[str, str]] = set()
        for task in self.tasks:
            validate_kernel(task.kernel)
            if task.target not in self.hardware_by_id:
                raise DataValidationError(
                    f"task {task.task_id!r}: dangling target {task.target!r}"
                )
            pair = (task.kernel.kernel_id, task.target)
            if pair in seen_pairs:
                raise DataValidationError(
                    f"task {task.task_id!r}: duplicate (kernel, target) pair {pair}"
                )
            seen_pairs.add(pair)
            # Kernel invariant: the flop count must be computable and positive.
            from .workload import flop_count

            flop_count(task.kernel)
        for rec in self.records:
            violations = validate_record(rec, self)
            if violations:
                raise DataValidationError(
                    f"record {rec.record_id!r}: {', '.join(violations)}"
                )

    # -- lookups ---------------------------------------------------------

    def task_of(self, rec: MeasurementRecord) -> Task:
        return self.task_by_id[rec.task_id]

    def hardware_of(self, task: Task) -> HardwareParams:
        return self.hardware_by_id[task.target]

    def valid_records_of_task(self, task_id: str) -> list[MeasurementRecord]:
        return [
            self.record_by_id[rid]
            for rid in self.records_by_task.get(task_id, [])
            if not self.record_by_id[rid].error_flag
        ]

    def subset_tasks(self, task_ids: Iterable[str]) -> "Dataset":
        """New dataset restricted to the given tasks, original order kept."""
        keep = set(task_ids)
        tasks = [t for t in self.tasks if t.task_id in keep]
        records = [r for r in self.records if r.task_id in keep]
        return Dataset.build(list(self.hardware), tasks, records, validate=False)


def throughput(rec: MeasurementRecord) -> float:
    """Measured useful work per second; only defined for non-error records."""
    if rec.error_flag or rec.mean_cost is None:
        raise DataValidationError(
            f"record {rec.record_id!r}: throughput is undefined for error records"
        )
    return rec.measured_flops / rec.mean_cost


def validate_record(rec: MeasurementRecord, ds: Dataset) -> list[str]:
    """Return violation codes for a record against a dataset (empty = ok)."""
    violations: list[str] = []
    task = ds.task_by_id.get(rec.task_id)
    if task is None:
        violations.append(f"dangling-task:{rec.task_id}")
    if rec.error_flag:
        if rec.mean_cost is not None:
            violations.append("cost-on-error")
    else:
        if rec.mean_cost is None:
            violations.append("missing-cost")
        elif not math.isfinite(rec.mean_cost) or rec.mean_cost <= 0:
            violations.append("non-positive-cost")
    if rec.measured_flops < 0:
        violations.append("negative-flops")

    sched = rec.schedule
    if sched.unroll_factor < 1:
        violations.append("bad-unroll-factor")
    if sched.vectorize_width < 1:
        violations.append("bad-vectorize-width")
    total_slots = 0
    for factors in sched.tile_factors:
        total_slots += len(factors)
        for f in factors:
            if f < 1:
                violations.append("bad-tile-factor")
                break
    if total_slots > MAX_TILE_SLOTS:
        violations.append("tile-slots-exceeded")
    if sched.thread_binding is not None:
        tx, ty = sched.thread_binding
        if tx < 1 or ty < 1:
            violations.append("bad-thread-binding")

    if task is not None:
        extents = task.kernel.output_shape
        if len(sched.tile_factors) != len(extents):
            violations.append("tile-axes-mismatch")
        else:
            for extent, factors in zip(extents, sched.tile_factors):
                prod = 1
                for f in factors:
                    prod *= max(f, 1)
                if extent % prod != 0:
                    violations.append("tile-divisibility")
                    break
        hw = ds.hardware_by_id.get(task.target)
        if (
            hw is not None
            and hw.hardware_class == "CPU"
            and sched.thread_binding is not None
        ):
            violations.append("gpu-binding-on-cpu")
    return violations


# -- persistence ----------------------------------------------------------

_COST_SENTINEL = "@@MEAN-COST-SENTINEL@@"


def _significant_digits(text: str) -> int:
    mantissa = re.split("[eE]", text)[0]
    digits = re.sub(r"[^0-9]", "", mantissa).lstrip("0")
    return len(digits)


def format_cost(value: float) -> str:
    """Decimal seconds with >= 9 significant digits and exact round-trip.

    The shortest round-trip repr is used when it already carries enough
    digits; otherwise the value is exactly representable with few digits and
    a zero-padded scientific form keeps both properties.
    """
    text = repr(float(value))
    if _significant_digits(text) >= 9:
        return text
    return f"{value:.8e}"


def _record_line(rec: MeasurementRecord) -> str:
    """One record as JSON with the cost spliced in at full precision.

    The cost is serialized by format_cost rather than json.dumps, so it is
    first stood in for by a sentinel string. The sentinel must appear exactly
    once or some other field (say a hostile record_id) contains it too.
    """
    obj = rec.to_json()
    if "mean_cost" not in obj:
        return json.dumps(obj, separators=(", ", ": "))
    cost = obj["mean_cost"]
    obj["mean_cost"] = _COST_SENTINEL
    line = json.dumps(obj, separators=(", ", ": "))
    quoted = f'"{_COST_SENTINEL}"'
    if line.count(quoted) != 1:
        raise DataValidationError(
            f"record {rec.record_id!r}: cannot serialize, sentinel collision"
        )
    return line.replace(quoted, format_cost(cost))


def dumps_dataset(ds: Dataset) -> str:
    lines = [json.dumps({"format": FORMAT_TAG}, separators=(", ", ": "))]
    for hw in ds.hardware:
        obj = {"type": "hardware", **hw.to_json()}
        lines.append(json.dumps(obj, separators=(", ", ": ")))
    for task in ds.tasks:
        lines.append(json.dumps(task.to_json(), separators=(", ", ": ")))
    for rec in ds.records:
        lines.append(_record_line(rec))
    return "\n".join(lines) + "\n"


def save_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(ds), encoding="utf-8")


def loads_dataset(text: str, lenient: bool = False) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DataValidationError("line 1: missing format header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"line 1: malformed header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise DataValidationError(
            f"line 1: expected format header {{\"format\": \"{FORMAT_TAG}\"}}"
        )

    hardware: list[HardwareParams] = []
    tasks: list[Task] = []
    records: list[MeasurementRecord] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            raise DataValidationError(f"line {lineno}: blank line")
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"line {lineno}: malformed line: {exc}") from exc
        if not isinstance(obj, dict) or "type" not in obj:
            raise DataValidationError(f"line {lineno}: object without a type field")
        kind = obj["type"]
        if lenient:
            obj = _strip_unknown(kind, obj)
        try:
            if kind == "hardware":
                entry = dict(obj)
                entry.pop("type")
                hardware.append(HardwareParams.from_json(entry))
            elif kind == "task":
                tasks.append(Task.from_json(obj))
            elif kind == "record":
                records.append(MeasurementRecord.from_json(obj))
            else:
                raise DataValidationError(f"unknown line type {kind!r}")
        except DataValidationError as exc:
            raise DataValidationError(f"line {lineno}: {exc}") from exc
    return Dataset.build(hardware, tasks, records)


_KNOWN_FIELDS = {
    "hardware": {
        "type",
        "target_id",
        "hardware_class",
        "cache_line_bytes",
        "max_local_memory_per_block",
        "max_shared_memory_per_block",
        "max_threads_per_block",
        "max_vthread_extent",
        "num_cores",
        "vector_unit_bytes",
        "warp_size",
    },
    "task": {"type", "task_id", "kernel", "target", "network_tag"},
    "record": {
        "type",
        "record_id",
        "task_id",
        "schedule",
        "mean_cost",
        "measured_flops",
        "error_flag",
    },
}

_KERNEL_FIELDS = {"kernel_id", "op", "input_shapes", "output_shape", "attributes"}
_SCHEDULE_FIELDS = {"tile_factors", "unroll_factor", "vectorize_width", "thread_binding"}


def _strip_unknown(kind: str, obj: dict[str, Any]) -> dict[str, Any]:
    known = _KNOWN_FIELDS.get(kind)
    if known is None:
        return obj
    out = {k: v for k, v in obj.items() if k in known}
    if kind == "task" and isinstance(out.get("kernel"), dict):
        out["kernel"] = {k: v for k, v in out["kernel"].items() if k in _KERNEL_FIELDS}
    if kind == "record" and isinstance(out.get("schedule"), dict):
        out["schedule"] = {
            k: v for k, v in out["schedule"].items() if k in _SCHEDULE_FIELDS
        }
    return out


def load_dataset(path: str | Path, lenient: bool = False) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"), lenient=lenient)
