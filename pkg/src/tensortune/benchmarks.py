"""Reproducible synthetic benchmark datasets used by tests and the CLI.

Everything here is deterministic in its seed arguments, so two runs with the
same parameters produce byte-identical datasets.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Kernel, MeasurementRecord, Task
from .hardware import HardwareParams, registry_by_id
from .oracle import OracleConfig, build_kernel, gen_dataset, sample_task_records
from .search import ScheduleSpace
from .splits import SplitAssignment, split


def convergence_benchmark(
    noise_sigma: float = 0.05,
    seed: int = 0,
    n_tasks: int = 16,
    records_per_task: int = 160,
    test_ratio: float = 0.25,
) -> tuple[Dataset, SplitAssignment]:
    """Dataset plus within-task split sized for model-convergence checks.

    The default sizes give the sequence model enough per-task coverage to fit
    the underlying cost surface down to the label-noise floor, which is what
    the convergence acceptance check measures against.
    """
    targets = registry_by_id()
    hardware = (targets["cpu-xeon24"], targets["gpu-t4ish"])
    cfg = OracleConfig(noise_sigma=noise_sigma, seed=seed)
    ds = gen_dataset(
        n_tasks,
        records_per_task,
        cfg,
        hardware=hardware,
        seed=seed,
        error_fraction=0.0,
    )
    assignment = split(ds, "within_task", test_ratio, seed)
    return ds, assignment


def pruning_benchmark(
    seed: int = 0,
    n_tasks: int = 200,
    records_per_task: int = 50,
    noise_sigma: float = 0.1,
    error_fraction: float = 0.02,
) -> Dataset:
    """Large multi-target dataset for sampling/pruning experiments."""
    cfg = OracleConfig(noise_sigma=noise_sigma, seed=seed)
    return gen_dataset(
        n_tasks,
        records_per_task,
        cfg,
        seed=seed,
        error_fraction=error_fraction,
    )


def transfer_benchmark(
    noise_sigma: float = 0.05,
    seed: int = 0,
    n_kernels: int = 10,
    records_per_task: int = 32,
    source_id: str = "cpu-xeon24",
    destination_id: str = "gpu-t4ish",
) -> tuple[Dataset, Dataset, Dataset]:
    """(combined, source-only, destination-only) datasets over shared kernels.

    Every kernel appears as one task per target, so a model trained on the
    source side sees the same workloads the destination side re-measures.
    """
    targets = registry_by_id()
    src = targets[source_id]
    dst = targets[destination_id]
    cfg = OracleConfig(noise_sigma=noise_sigma, seed=seed)
    rng = np.random.default_rng(seed)

    kernels: list[Kernel] = [build_kernel(i, rng) for i in range(n_kernels)]
    tasks: list[Task] = []
    records: list[MeasurementRecord] = []
    for i, kernel in enumerate(kernels):
        for suffix, hw in (("s", src), ("d", dst)):
            task = Task(
                task_id=f"t{i:03d}{suffix}", kernel=kernel, target=hw.target_id
            )
            tasks.append(task)
            records.extend(
                sample_task_records(
                    task,
                    hw,
                    cfg,
                    records_per_task,
                    rng,
                    start_index=len(records),
                    error_fraction=0.0,
                )
            )
    combined = Dataset.build([src, dst], tasks, records)
    source_ds = combined.subset_tasks(
        [t.task_id for t in tasks if t.target == src.target_id]
    )
    dest_ds = combined.subset_tasks(
        [t.task_id for t in tasks if t.target == dst.target_id]
    )
    return combined, source_ds, dest_ds


def small_search_spaces(
    max_size: int = 256,
) -> list[tuple[Kernel, HardwareParams, ScheduleSpace]]:
    """Exhaustively enumerable schedule spaces over both hardware classes.

    Domains are kept narrow on purpose: every space stays below max_size raw
    points so tests can brute-force the true optimum.
    """
    targets = registry_by_id()
    cpu_small = targets["cpu-small4"]
    cpu_big = targets["cpu-xeon24"]
    gpu = targets["gpu-t4ish"]

    def singles(*factors: int) -> tuple[tuple[int, ...], ...]:
        return tuple((f,) for f in factors)

    mm16 = Kernel(
        kernel_id="bench-mm16",
        op="matmul",
        input_shapes=((16, 16), (16, 16)),
        output_shape=(16, 16),
    )
    add32 = Kernel(
        kernel_id="bench-add",
        op="elementwise-add",
        input_shapes=((32, 32), (32, 32)),
        output_shape=(32, 32),
    )
    relu = Kernel(
        kernel_id="bench-relu",
        op="relu",
        input_shapes=((16, 64),),
        output_shape=(16, 64),
    )
    tanh = Kernel(
        kernel_id="bench-tanh",
        op="tanh",
        input_shapes=((64, 16),),
        output_shape=(64, 16),
    )
    gpu_bind = ((8, 8), (16, 16), (32, 32))
    cases = [
        ScheduleSpace(
            kernel=mm16,
            hw=cpu_small,
            tile_domains=(singles(1), singles(1, 2, 4, 8, 16)),
            unroll_domain=(1, 2, 4, 8),
            vectorize_domain=(1, 2, 4, 8),
            bind_domain=None,
        ),
        ScheduleSpace(
            kernel=add32,
            hw=cpu_big,
            tile_domains=(singles(1), singles(1, 2, 4, 8, 16, 32)),
            unroll_domain=(1, 2, 4),
            vectorize_domain=(1, 2, 4, 8, 16),
            bind_domain=None,
        ),
        ScheduleSpace(
            kernel=relu,
            hw=gpu,
            tile_domains=(singles(1), singles(1, 2, 4, 8)),
            unroll_domain=(1, 2, 4),
            vectorize_domain=(1, 2, 4),
            bind_domain=gpu_bind,
        ),
        ScheduleSpace(
            kernel=tanh,
            hw=gpu,
            tile_domains=(singles(1, 2, 4), singles(1)),
            unroll_domain=(1, 2, 4),
            vectorize_domain=(1, 2),
            bind_domain=gpu_bind,
        ),
    ]
    out = []
    for space in cases:
        if space.size() > max_size:
            raise ValueError(
                f"benchmark space for {space.kernel.kernel_id} has "
                f"{space.size()} points"
            )
        out.append((space.kernel, space.hw, space))
    return out
