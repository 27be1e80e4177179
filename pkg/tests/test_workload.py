"""Flop accounting and dataset characterization."""

from __future__ import annotations

import numpy as np
import pytest

from tensortune.data import Dataset, Kernel
from tensortune.errors import DataValidationError
from tensortune.workload import characterize, characterization_table, flop_count

from conftest import (
    CPU_ID,
    GPU_ID,
    build_dataset,
    make_add_kernel,
    make_matmul_kernel,
    make_record,
    plain_schedule,
)


def brute_force_matmul_flops(m: int, k: int, n: int) -> int:
    """Count one multiply and one add per inner-product term."""
    count = 0
    for _ in range(m):
        for _ in range(n):
            for _ in range(k):
                count += 2
    return count


def brute_force_conv_flops(data, weight, stride, padding) -> int:
    n, h, w, c_in = data
    k_h, k_w, _, c_out = weight
    h_out = (h + 2 * padding - k_h) // stride + 1
    w_out = (w + 2 * padding - k_w) // stride + 1
    count = 0
    for _ in range(n * h_out * w_out * c_out):
        count += 2 * k_h * k_w * c_in
    return count


def conv_kernel(
    kid="k-conv",
    op="conv2d",
    data=(1, 8, 8, 4),
    k_size=3,
    c_out=8,
    stride=1,
    padding=1,
) -> Kernel:
    n, h, w, c_in = data
    h_out = (h + 2 * padding - k_size) // stride + 1
    w_out = (w + 2 * padding - k_size) // stride + 1
    return Kernel(
        kernel_id=kid,
        op=op,
        input_shapes=(data, (k_size, k_size, c_in, c_out)),
        output_shape=(n, h_out, w_out, c_out),
        attributes={"stride": stride, "padding": padding},
    )


class TestFlopCount:
    def test_elementwise_add_example(self):
        assert flop_count(make_add_kernel(shape=(4, 256, 1024))) == 1_048_576

    def test_matmul_example_matches_brute_force(self):
        kernel = make_matmul_kernel(m=2, k=3, n=4)
        assert flop_count(kernel) == 48
        assert flop_count(kernel) == brute_force_matmul_flops(2, 3, 4)

    def test_relu_single_element(self):
        kernel = Kernel(
            kernel_id="k-r", op="relu", input_shapes=((1,),), output_shape=(1,)
        )
        assert flop_count(kernel) == 1

    def test_transcendental_per_element_costs(self):
        shape = (8, 8)
        for op, per_elem in (("tanh", 4), ("fast-tanh", 4), ("softmax-norm", 5)):
            kernel = Kernel(
                kernel_id=f"k-{op}", op=op, input_shapes=(shape,), output_shape=shape
            )
            assert flop_count(kernel) == 64 * per_elem

    def test_conv2d_matches_brute_force(self):
        kernel = conv_kernel()
        expected = brute_force_conv_flops((1, 8, 8, 4), (3, 3, 4, 8), 1, 1)
        assert flop_count(kernel) == expected

    def test_winograd_charges_half_of_direct(self):
        direct = conv_kernel(kid="k-d", op="conv2d")
        wino = conv_kernel(kid="k-w", op="conv2d-winograd")
        assert flop_count(wino) * 2 == flop_count(direct)

    def test_overflow_raises(self):
        kernel = make_add_kernel(shape=(2**32, 2**32))
        with pytest.raises(DataValidationError, match="2\\*\\*63"):
            flop_count(kernel)

    def test_unknown_op_rejected(self):
        kernel = Kernel(
            kernel_id="k-x", op="fused-magic", input_shapes=((4,),), output_shape=(4,)
        )
        with pytest.raises(DataValidationError):
            flop_count(kernel)

    def test_monotone_in_every_output_dim(self):
        base = make_add_kernel(shape=(4, 8, 16))
        base_count = flop_count(base)
        for axis in range(3):
            shape = list(base.output_shape)
            shape[axis] *= 2
            bigger = make_add_kernel(kernel_id="k-big", shape=tuple(shape))
            assert flop_count(bigger) >= base_count

    def test_monotone_in_matmul_dims(self):
        base = flop_count(make_matmul_kernel(m=4, k=8, n=16))
        assert flop_count(make_matmul_kernel(m=8, k=8, n=16)) >= base
        assert flop_count(make_matmul_kernel(m=4, k=16, n=16)) >= base
        assert flop_count(make_matmul_kernel(m=4, k=8, n=32)) >= base

    def test_monotone_in_conv_channel_and_batch_dims(self):
        base = flop_count(conv_kernel())
        assert flop_count(conv_kernel(kid="k-n", data=(2, 8, 8, 4))) >= base
        assert flop_count(conv_kernel(kid="k-c", data=(1, 8, 8, 8))) >= base
        assert flop_count(conv_kernel(kid="k-o", c_out=16)) >= base


class TestCharacterize:
    def _single_record_dataset(self) -> Dataset:
        kernel = make_add_kernel(shape=(4, 256, 1024))
        record = make_record(
            "r0", "t0", plain_schedule(3), cost=2e-3, flops=1_048_576
        )
        return build_dataset([("t0", kernel, CPU_ID)], [record])

    def test_single_record_example(self):
        entries = characterize(self._single_record_dataset())
        assert len(entries) == 1
        entry = entries[0]
        assert entry.op == "elementwise-add"
        assert entry.shape_count_per_class == {"CPU": 1}
        assert entry.max_gflops_per_class["CPU"] == pytest.approx(0.001048576)
        assert entry.mean_exec_time_ms_per_target[CPU_ID] == pytest.approx(2.0)
        assert entry.best_shape == (4, 256, 1024)

    def test_empty_dataset_gives_empty_list(self):
        entries = characterize(Dataset.build([], [], []))
        assert entries == []
        table = characterization_table(entries)
        assert "op" in table

    def test_error_only_op_has_counts_but_no_mean(self):
        kernel = make_add_kernel(shape=(8, 8))
        record = make_record("r0", "t0", plain_schedule(2), None, error=True)
        ds = build_dataset([("t0", kernel, CPU_ID)], [record])
        entries = characterize(ds)
        assert entries[0].shape_count_per_class == {"CPU": 1}
        assert entries[0].mean_exec_time_ms_per_target == {}
        assert entries[0].max_gflops_per_class == {}

    def test_gpu_only_op_has_no_cpu_fields(self):
        kernel = make_add_kernel(shape=(16, 16))
        record = make_record(
            "r0", "t0", plain_schedule(2, thread_binding=(8, 8)), 1e-4, flops=256
        )
        ds = build_dataset([("t0", kernel, GPU_ID)], [record])
        entry = characterize(ds)[0]
        assert "CPU" not in entry.shape_count_per_class
        assert "CPU" not in entry.max_gflops_per_class
        assert entry.shape_count_per_class == {"GPU": 1}

    def test_order_independence(self, small_dataset):
        base = [e.to_json() for e in characterize(small_dataset)]
        shuffled = Dataset.build(
            small_dataset.hardware,
            small_dataset.tasks,
            list(reversed(small_dataset.records)),
        )
        assert [e.to_json() for e in characterize(shuffled)] == base

    def test_mean_record_counts_cover_all_valid_records(self, small_dataset):
        entries = characterize(small_dataset)
        counted = sum(
            sum(entry.valid_record_count_per_target.values()) for entry in entries
        )
        valid = sum(1 for r in small_dataset.records if not r.error_flag)
        assert counted == valid

    def test_table_renders_one_row_per_op(self, small_dataset):
        entries = characterize(small_dataset)
        table = characterization_table(entries)
        lines = [line for line in table.splitlines() if line.strip()]
        assert len(lines) == len(entries) + 2  # header, separator, one row per op
        for entry in entries:
            assert any(entry.op in line for line in lines[2:])
