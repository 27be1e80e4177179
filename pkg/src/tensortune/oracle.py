"""Synthetic measurement oracle and dataset generator.

The oracle plays the role of real hardware at desk scale: cost is work over
attainable throughput, where attainable throughput is the target's peak
scaled by a schedule efficiency in (0, 1]. Efficiency combines a cache
working-set term, a vectorization bonus that saturates at the vector unit
width, an unroll bonus that saturates at 4, and (on GPUs) an occupancy term.
Noise is a log-normal factor keyed by (kernel, schedule, hardware, seed), so
repeated queries agree bit-for-bit.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .data import (
    OPERATOR_REGISTRY,
    Dataset,
    Kernel,
    MeasurementRecord,
    ScheduleConfig,
    Task,
)
from .errors import DataValidationError
from .hardware import HardwareParams, registry
from .search import ScheduleSpace, default_space, sample_point, validity_check
from .workload import flop_count


@dataclass(frozen=True)
class ClassCoefficients:
    """Per-hardware-class shaping of the efficiency model."""

    base_efficiency: float
    cache_penalty_weight: float
    vector_bonus_weight: float
    occupancy_weight: float

    def validate(self) -> None:
        if not 0.0 < self.base_efficiency <= 1.0:
            raise DataValidationError("base_efficiency must be in (0, 1]")
        for name in ("cache_penalty_weight", "vector_bonus_weight", "occupancy_weight"):
            if getattr(self, name) < 0:
                raise DataValidationError(f"{name} must be >= 0")


@dataclass(frozen=True)
class OracleConfig:
    noise_sigma: float = 0.05
    seed: int = 0
    cpu: ClassCoefficients = field(
        default_factory=lambda: ClassCoefficients(
            base_efficiency=0.6,
            cache_penalty_weight=0.055,
            vector_bonus_weight=0.35,
            occupancy_weight=0.0,
        )
    )
    gpu: ClassCoefficients = field(
        default_factory=lambda: ClassCoefficients(
            base_efficiency=0.5,
            cache_penalty_weight=0.035,
            vector_bonus_weight=0.45,
            occupancy_weight=0.3,
        )
    )

    def validate(self) -> None:
        if self.noise_sigma < 0:
            raise DataValidationError("noise_sigma must be >= 0")
        self.cpu.validate()
        self.gpu.validate()

    def coefficients_for(self, hw: HardwareParams) -> ClassCoefficients:
        return self.cpu if hw.hardware_class == "CPU" else self.gpu

    def to_json(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "cpu": self.cpu.__dict__,
            "gpu": self.gpu.__dict__,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OracleConfig":
        known = {"noise_sigma", "seed", "cpu", "gpu"}
        unknown = set(obj) - known
        if unknown:
            raise DataValidationError(
                f"oracle config has unknown fields: {sorted(unknown)}"
            )
        try:
            cfg = cls(
                noise_sigma=float(obj.get("noise_sigma", 0.05)),
                seed=int(obj.get("seed", 0)),
                cpu=ClassCoefficients(**obj["cpu"]) if "cpu" in obj else cls().cpu,
                gpu=ClassCoefficients(**obj["gpu"]) if "gpu" in obj else cls().gpu,
            )
        except (TypeError, ValueError) as exc:
            raise DataValidationError(f"malformed oracle config: {exc}") from exc
        cfg.validate()
        return cfg


# Fixed shaping constants (documented here rather than made configurable):
# the unroll bonus saturates at 4 and over-unrolling pays a register-pressure
# penalty; over-vectorizing beyond the unit width pays 1.5x the bonus weight.
_UNROLL_SATURATION = 4
_UNROLL_BONUS_EXP = 0.25
_UNROLL_OVER_EXP = 0.35
_VECTOR_OVER_SCALE = 1.5
_CACHE_TARGET_BASE = 2.0  # log2(footprint / cache line) sweet spot for reuse 1


def peak_flops(hw: HardwareParams) -> float:
    """Nominal peak throughput (flop/s) implied by the target parameters."""
    if hw.hardware_class == "CPU":
        return hw.num_cores * (hw.vector_unit_bytes / 4) * 2.0e9
    return hw.max_threads_per_block * hw.warp_size * 1.25e8


def _inner_tile_product(schedule: ScheduleConfig) -> int:
    prod = 1
    for factors in schedule.tile_factors:
        if factors:
            prod *= factors[-1]
    return prod


def _reuse(kernel: Kernel) -> float:
    """Flops charged per output element; drives the cache sweet spot."""
    out_elems = 1
    for d in kernel.output_shape:
        out_elems *= d
    return flop_count(kernel) / out_elems


def efficiency(
    kernel: Kernel, schedule: ScheduleConfig, hw: HardwareParams, cfg: OracleConfig
) -> float:
    """Deterministic fraction of peak attained by a schedule, in (0, 1]."""
    coeffs = cfg.coefficients_for(hw)

    footprint_bytes = 4.0 * _inner_tile_product(schedule)
    t = math.log2(max(footprint_bytes / hw.cache_line_bytes, 2.0**-6))
    t_opt = _CACHE_TARGET_BASE + 0.5 * math.log2(_reuse(kernel))
    cache_term = math.exp(-coeffs.cache_penalty_weight * (t - t_opt) ** 2)

    lanes = hw.vector_unit_bytes // 4
    v = schedule.vectorize_width
    if v <= lanes:
        vec_term = (v / lanes) ** coeffs.vector_bonus_weight
    else:
        vec_term = (lanes / v) ** (coeffs.vector_bonus_weight * _VECTOR_OVER_SCALE)

    u = schedule.unroll_factor
    if u <= _UNROLL_SATURATION:
        unroll_term = (u / _UNROLL_SATURATION) ** _UNROLL_BONUS_EXP
    else:
        unroll_term = (_UNROLL_SATURATION / u) ** _UNROLL_OVER_EXP

    eff = coeffs.base_efficiency * cache_term * vec_term * unroll_term
    if hw.hardware_class == "GPU":
        threads = 1
        if schedule.thread_binding is not None:
            threads = schedule.thread_binding[0] * schedule.thread_binding[1]
        occupancy = threads / hw.max_threads_per_block
        eff *= occupancy**coeffs.occupancy_weight
    return eff


def _hash_units(
    kernel: Kernel, schedule: ScheduleConfig, hw: HardwareParams, seed: int
) -> tuple[float, float, float]:
    key = "|".join(
        [
            str(seed),
            kernel.op,
            repr(kernel.input_shapes),
            repr(kernel.output_shape),
            repr(sorted(kernel.attributes.items())),
            repr(schedule.tile_factors),
            str(schedule.unroll_factor),
            str(schedule.vectorize_width),
            repr(schedule.thread_binding),
            hw.target_id,
        ]
    )
    digest = hashlib.sha256(key.encode()).digest()

    def unit(offset: int) -> float:
        raw = int.from_bytes(digest[offset : offset + 8], "little")
        return (raw + 0.5) / 2.0**64

    return unit(0), unit(8), unit(16)


def oracle_cost(
    kernel: Kernel, schedule: ScheduleConfig, hw: HardwareParams, cfg: OracleConfig
) -> float:
    """Synthetic measured cost (seconds) of one schedule on one target.

    Invalid schedules raise instead of returning a cost, mirroring a failed
    hardware launch. A keyed jitter of ~1e-9 relative magnitude breaks exact
    ties even at noise_sigma 0, keeping per-task orders total.
    """
    cfg.validate()
    bad = validity_check(schedule, kernel, hw)
    if bad:
        raise DataValidationError(
            f"oracle_cost: invalid schedule for {kernel.kernel_id!r} on "
            f"{hw.target_id!r}: {', '.join(bad)}"
        )
    work = flop_count(kernel)
    eff = efficiency(kernel, schedule, hw, cfg)
    u1, u2, u3 = _hash_units(kernel, schedule, hw, cfg.seed)
    gauss = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    noise = math.exp(cfg.noise_sigma * gauss)
    jitter = 1.0 + 1e-9 * u3
    return work / (peak_flops(hw) * eff) * noise * jitter


# -- dataset generation ----------------------------------------------------

_ELEMWISE_RANKS = (2, 3)
_POW2_DIMS = (16, 32, 64, 128, 256)
_MATMUL_DIMS = (16, 32, 64, 128)
_CONV_HW = (8, 16, 32)
_CONV_CHANNELS = (8, 16, 32, 64)


def build_kernel(index: int, rng: np.random.Generator) -> Kernel:
    """A seeded kernel cycling through the operator registry."""
    op = OPERATOR_REGISTRY[index % len(OPERATOR_REGISTRY)]
    kid = f"k{index:04d}"
    if op in ("matmul",):
        m = int(rng.choice(_MATMUL_DIMS))
        k = int(rng.choice(_MATMUL_DIMS))
        n = int(rng.choice(_MATMUL_DIMS))
        return Kernel(
            kernel_id=kid,
            op=op,
            input_shapes=((m, k), (k, n)),
            output_shape=(m, n),
        )
    if op in ("conv2d", "conv2d-winograd"):
        n = int(rng.choice((1, 2, 4)))
        hw_dim = int(rng.choice(_CONV_HW))
        c_in = int(rng.choice(_CONV_CHANNELS))
        c_out = int(rng.choice(_CONV_CHANNELS))
        ksize = 3 if op == "conv2d-winograd" else int(rng.choice((1, 3)))
        padding = (ksize - 1) // 2
        return Kernel(
            kernel_id=kid,
            op=op,
            input_shapes=(
                (n, hw_dim, hw_dim, c_in),
                (ksize, ksize, c_in, c_out),
            ),
            output_shape=(n, hw_dim, hw_dim, c_out),
            attributes={"stride": 1, "padding": padding},
        )
    rank = int(rng.choice(_ELEMWISE_RANKS))
    shape = tuple(int(rng.choice(_POW2_DIMS)) for _ in range(rank))
    n_inputs = 2 if op in ("elementwise-add", "elementwise-multiply", "elementwise-divide") else 1
    return Kernel(
        kernel_id=kid,
        op=op,
        input_shapes=tuple(shape for _ in range(n_inputs)),
        output_shape=shape,
    )


def sample_task_records(
    task: Task,
    hw: HardwareParams,
    cfg: OracleConfig,
    n_records: int,
    rng: np.random.Generator,
    start_index: int,
    error_fraction: float,
    space: ScheduleSpace | None = None,
) -> list[MeasurementRecord]:
    """Sample schedules (distinct while possible) and price them."""
    space = space or default_space(task.kernel, hw)
    seen: set = set()
    records = []
    for j in range(n_records):
        schedule = None
        for _ in range(64):
            candidate = sample_point(space, rng)
            if candidate is None:
                break
            key = (
                candidate.tile_factors,
                candidate.unroll_factor,
                candidate.vectorize_width,
                candidate.thread_binding,
            )
            if key not in seen:
                seen.add(key)
                schedule = candidate
                break
        if schedule is None:
            schedule = sample_point(space, rng)
        if schedule is None:
            raise DataValidationError(
                f"task {task.task_id!r}: schedule space has no valid points"
            )
        rid = f"r{start_index + j:06d}"
        if rng.random() < error_fraction:
            records.append(
                MeasurementRecord(
                    record_id=rid,
                    task_id=task.task_id,
                    schedule=schedule,
                    mean_cost=None,
                    measured_flops=0,
                    error_flag=True,
                )
            )
        else:
            cost = oracle_cost(task.kernel, schedule, hw, cfg)
            records.append(
                MeasurementRecord(
                    record_id=rid,
                    task_id=task.task_id,
                    schedule=schedule,
                    mean_cost=cost,
                    measured_flops=flop_count(task.kernel),
                )
            )
    return records


def gen_dataset(
    n_tasks: int,
    records_per_task: int,
    cfg: OracleConfig,
    hardware: tuple[HardwareParams, ...] | None = None,
    seed: int | None = None,
    error_fraction: float = 0.02,
) -> Dataset:
    """Generate a priced dataset: kernels cycle the registry, targets rotate
    round-robin over the hardware list, schedules are sampled per task."""
    cfg.validate()
    if n_tasks < 1 or records_per_task < 1:
        raise DataValidationError("gen_dataset: sizes must be positive")
    if not 0.0 <= error_fraction < 1.0:
        raise DataValidationError("error_fraction must be in [0, 1)")
    hardware = tuple(hardware) if hardware else registry()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    tasks = []
    for i in range(n_tasks):
        kernel = build_kernel(i, rng)
        target = hardware[i % len(hardware)]
        tasks.append(
            Task(task_id=f"t{i:04d}", kernel=kernel, target=target.target_id)
        )

    records: list[MeasurementRecord] = []
    for i, task in enumerate(tasks):
        hw = hardware[i % len(hardware)]
        records.extend(
            sample_task_records(
                task,
                hw,
                cfg,
                records_per_task,
                rng,
                start_index=len(records),
                error_fraction=error_fraction,
            )
        )
    return Dataset.build(list(hardware), tasks, records)
