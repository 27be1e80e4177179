"""Shared fixtures and independent reference implementations.

The reference helpers here are deliberately written from the definitions
(nested loops, exhaustive enumeration, finite differences) rather than
reusing package code, so the tests compare two independent derivations.
"""

from __future__ import annotations

import numpy as np
import pytest

from tensortune.data import (
    Dataset,
    Kernel,
    MeasurementRecord,
    ScheduleConfig,
    Task,
)
from tensortune.hardware import HardwareParams, registry_by_id


# -- reference implementations ------------------------------------------------


def brute_force_pca(y, y_hat) -> float:
    """O(n^2) pair counter straight from the definition.

    A pair is counted as correct when both vectors order it the same way;
    a tie on one side only matches a tie on the other.
    """
    n = len(y)
    assert n >= 2
    correct = 0
    total = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += 1
            if y[i] > y[j]:
                true_order = 1
            elif y[i] < y[j]:
                true_order = -1
            else:
                true_order = 0
            if y_hat[i] > y_hat[j]:
                pred_order = 1
            elif y_hat[i] < y_hat[j]:
                pred_order = -1
            else:
                pred_order = 0
            if true_order == pred_order:
                correct += 1
    return correct / total


def central_difference_grads(loss_fn, params: dict, eps: float = 1e-6) -> dict:
    """Numeric gradients of loss_fn() with respect to every entry of params.

    loss_fn must read the (mutated in place) arrays in params on every call.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        g_flat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_fn()
            flat[i] = keep - eps
            down = loss_fn()
            flat[i] = keep
            g_flat[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_gradient_error(analytic: dict, numeric: dict) -> float:
    """Worst-case relative error between two gradient dicts.

    Per parameter tensor: ||a - n|| / max(||a|| + ||n||, 1e-4), the norm
    ratio conventionally used for gradient checks (robust to individual
    entries that are incidentally near zero). The 1e-4 denominator floor
    turns the usual relative tolerance of 1e-4 into an absolute agreement
    threshold of 1e-8 for parameters whose gradient vanishes on both sides
    (for example biases a loss is invariant to), well above the ~1e-10
    cancellation noise of central differences yet far below any gradient
    signal finite differences can resolve.
    """
    worst = 0.0
    for name in numeric:
        a = np.asarray(analytic[name], dtype=np.float64).ravel()
        n = numeric[name].ravel()
        denom = max(float(np.linalg.norm(a) + np.linalg.norm(n)), 1e-4)
        worst = max(worst, float(np.linalg.norm(a - n)) / denom)
    return worst


# -- dataset builders ----------------------------------------------------------


CPU_ID = "cpu-xeon24"
CPU_SMALL_ID = "cpu-small4"
GPU_ID = "gpu-t4ish"


@pytest.fixture
def cpu_hw() -> HardwareParams:
    return registry_by_id()[CPU_ID]


@pytest.fixture
def gpu_hw() -> HardwareParams:
    return registry_by_id()[GPU_ID]


def make_add_kernel(kernel_id: str = "k-add", shape=(4, 256, 1024)) -> Kernel:
    return Kernel(
        kernel_id=kernel_id,
        op="elementwise-add",
        input_shapes=(tuple(shape), tuple(shape)),
        output_shape=tuple(shape),
    )


def make_matmul_kernel(kernel_id: str = "k-mm", m=16, k=16, n=16) -> Kernel:
    return Kernel(
        kernel_id=kernel_id,
        op="matmul",
        input_shapes=((m, k), (k, n)),
        output_shape=(m, n),
    )


def plain_schedule(n_axes: int, **kwargs) -> ScheduleConfig:
    return ScheduleConfig(tile_factors=tuple((1,) for _ in range(n_axes)), **kwargs)


def make_record(
    record_id: str,
    task_id: str,
    schedule: ScheduleConfig,
    cost: float | None,
    flops: int = 1000,
    error: bool = False,
) -> MeasurementRecord:
    return MeasurementRecord(
        record_id=record_id,
        task_id=task_id,
        schedule=schedule,
        mean_cost=cost,
        measured_flops=0 if error else flops,
        error_flag=error,
    )


def build_dataset(
    task_specs: list[tuple[str, Kernel, str]],
    record_specs: list[MeasurementRecord],
    targets: tuple[str, ...] = (CPU_ID, GPU_ID),
) -> Dataset:
    by_id = registry_by_id()
    return Dataset.build(
        hardware=[by_id[t] for t in targets],
        tasks=[Task(task_id=tid, kernel=k, target=tgt) for tid, k, tgt in task_specs],
        records=record_specs,
    )


@pytest.fixture
def small_dataset() -> Dataset:
    """Two CPU tasks and one GPU task with hand-priced records."""
    add = make_add_kernel("k-a", shape=(16, 64))
    mm = make_matmul_kernel("k-b", 16, 16, 16)
    relu = Kernel(
        kernel_id="k-c",
        op="relu",
        input_shapes=((32, 32),),
        output_shape=(32, 32),
    )
    records = []
    for i, cost in enumerate([2e-4, 1e-4, 4e-4, 3e-4]):
        records.append(
            make_record(f"ra{i}", "t-add", plain_schedule(2, unroll_factor=2**i), cost, flops=1024)
        )
    for i, cost in enumerate([5e-4, 2.5e-4, 1e-3]):
        records.append(
            make_record(f"rb{i}", "t-mm", plain_schedule(2, vectorize_width=2**i), cost, flops=8192)
        )
    for i, cost in enumerate([7e-4, 3.5e-4]):
        records.append(
            make_record(
                f"rc{i}",
                "t-relu",
                plain_schedule(2, thread_binding=(8, 8 * (i + 1))),
                cost,
                flops=1024,
            )
        )
    records.append(
        make_record("ra-err", "t-add", plain_schedule(2), None, error=True)
    )
    return build_dataset(
        [("t-add", add, CPU_ID), ("t-mm", mm, CPU_ID), ("t-relu", relu, GPU_ID)],
        records,
    )
