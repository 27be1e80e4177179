"""Tests for the synthetic cost oracle and its dataset generator."""

from __future__ import annotations

import pytest

from tensortune.data import Dataset, ScheduleConfig
from tensortune.errors import DataValidationError
from tensortune.hardware import registry_by_id
from tensortune.oracle import (
    ClassCoefficients,
    OracleConfig,
    build_kernel,
    efficiency,
    gen_dataset,
    oracle_cost,
    peak_flops,
)
from tensortune.workload import flop_count

from conftest import make_add_kernel, plain_schedule

EXACT = OracleConfig(noise_sigma=0.0, seed=0)


class TestOracleCost:
    def test_matches_closed_form_at_zero_noise(self, cpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        schedule = plain_schedule(2, vectorize_width=4)
        cost = oracle_cost(kernel, schedule, cpu_hw, EXACT)
        base = flop_count(kernel) / (
            peak_flops(cpu_hw) * efficiency(kernel, schedule, cpu_hw, EXACT)
        )
        # Only the 1e-9-relative tie-break jitter separates cost from base.
        assert cost == pytest.approx(base, rel=1e-8)
        assert cost > base  # jitter is strictly positive

    def test_vectorized_schedule_strictly_cheaper(self, cpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        scalar = plain_schedule(2, vectorize_width=1)
        vectorized = plain_schedule(2, vectorize_width=16)  # lanes = 64/4
        assert oracle_cost(kernel, vectorized, cpu_hw, EXACT) < oracle_cost(
            kernel, scalar, cpu_hw, EXACT
        )

    def test_repeated_query_is_identical(self, gpu_hw):
        kernel = make_add_kernel(shape=(32, 32))
        schedule = plain_schedule(2, thread_binding=(8, 8))
        cfg = OracleConfig(noise_sigma=0.05, seed=11)
        assert oracle_cost(kernel, schedule, gpu_hw, cfg) == oracle_cost(
            kernel, schedule, gpu_hw, cfg
        )

    def test_doubling_output_dims_scales_by_flop_ratio(self, cpu_hw):
        schedule = plain_schedule(2)
        small = make_add_kernel(kernel_id="k-s", shape=(64, 64))
        big = make_add_kernel(kernel_id="k-b", shape=(128, 128))
        ratio = oracle_cost(big, schedule, cpu_hw, EXACT) / oracle_cost(
            small, schedule, cpu_hw, EXACT
        )
        # Equal reuse and footprint leave efficiency unchanged, so the ratio
        # is the flop ratio up to jitter.
        assert ratio == pytest.approx(4.0, rel=1e-8)

    def test_seed_changes_noise(self, cpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        schedule = plain_schedule(2)
        a = oracle_cost(kernel, schedule, cpu_hw, OracleConfig(noise_sigma=0.05, seed=0))
        b = oracle_cost(kernel, schedule, cpu_hw, OracleConfig(noise_sigma=0.05, seed=1))
        assert a != b

    def test_invalid_schedule_rejected(self, cpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        schedule = plain_schedule(2, thread_binding=(2, 2))
        with pytest.raises(DataValidationError, match="invalid schedule"):
            oracle_cost(kernel, schedule, cpu_hw, EXACT)

    def test_unroll_sweet_spot_at_four(self, cpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        cost_at = {
            u: oracle_cost(kernel, plain_schedule(2, unroll_factor=u), cpu_hw, EXACT)
            for u in (1, 2, 4, 8)
        }
        assert cost_at[4] < cost_at[2] < cost_at[1]
        assert cost_at[4] < cost_at[8]

    def test_gpu_occupancy_rewards_thread_binding(self, gpu_hw):
        kernel = make_add_kernel(shape=(64, 64))
        low = plain_schedule(2, thread_binding=(1, 1))
        high = plain_schedule(2, thread_binding=(32, 32))
        assert oracle_cost(kernel, high, gpu_hw, EXACT) < oracle_cost(
            kernel, low, gpu_hw, EXACT
        )

    def test_peak_flops_values(self, cpu_hw, gpu_hw):
        assert peak_flops(cpu_hw) == 24 * 16 * 2.0e9
        assert peak_flops(gpu_hw) == 1024 * 32 * 1.25e8
        small = registry_by_id()["cpu-small4"]
        assert peak_flops(small) == 4 * 8 * 2.0e9

    def test_efficiency_stays_in_unit_interval(self, cpu_hw, gpu_hw):
        kernel = make_add_kernel(shape=(256, 256))
        for unroll in (1, 4, 8):
            for vec in (1, 4, 16):
                schedule = plain_schedule(2, unroll_factor=unroll, vectorize_width=vec)
                assert 0.0 < efficiency(kernel, schedule, cpu_hw, EXACT) <= 1.0
                assert 0.0 < efficiency(kernel, schedule, gpu_hw, EXACT) <= 1.0

    def test_cpu_and_gpu_argmin_disagree(self, cpu_hw, gpu_hw):
        # Schedules valid on both classes; the wider vector unit pushes the
        # CPU optimum to a larger width than the GPU's.
        kernel = make_add_kernel(shape=(256, 256))
        shared = [
            plain_schedule(2, unroll_factor=u, vectorize_width=v)
            for u in (1, 2, 4, 8)
            for v in (1, 2, 4, 8, 16)
        ]
        cpu_best = min(shared, key=lambda s: oracle_cost(kernel, s, cpu_hw, EXACT))
        gpu_best = min(shared, key=lambda s: oracle_cost(kernel, s, gpu_hw, EXACT))
        assert cpu_best != gpu_best


class TestOracleConfig:
    def test_defaults_validate(self):
        OracleConfig().validate()

    def test_negative_sigma_rejected(self):
        with pytest.raises(DataValidationError, match="noise_sigma"):
            OracleConfig(noise_sigma=-0.1).validate()

    def test_bad_coefficients_rejected(self):
        bad = ClassCoefficients(
            base_efficiency=0.5,
            cache_penalty_weight=-1.0,
            vector_bonus_weight=0.1,
            occupancy_weight=0.0,
        )
        with pytest.raises(DataValidationError, match="cache_penalty_weight"):
            OracleConfig(cpu=bad).validate()

    def test_json_round_trip(self):
        cfg = OracleConfig(noise_sigma=0.1, seed=7)
        assert OracleConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(DataValidationError, match="thermal_budget"):
            OracleConfig.from_json({"noise_sigma": 0.1, "thermal_budget": 5})


class TestGenDataset:
    def test_three_by_ten_sizes(self):
        ds = gen_dataset(3, 10, OracleConfig(seed=1), seed=1)
        assert len(ds.records) == 30
        assert len(ds.tasks) == 3
        assert sum(r.error_flag for r in ds.records) == 1  # ~2% of 30
        assert [t.task_id for t in ds.tasks] == ["t0000", "t0001", "t0002"]

    def test_generated_dataset_revalidates(self):
        ds = gen_dataset(4, 8, OracleConfig(seed=3), seed=3)
        Dataset.build(list(ds.hardware), list(ds.tasks), list(ds.records))

    def test_kernels_cycle_operator_registry(self):
        ds = gen_dataset(10, 2, OracleConfig(seed=2), seed=2)
        ops = [t.kernel.op for t in ds.tasks]
        assert len(set(ops)) == 10

    def test_targets_rotate_round_robin(self):
        ds = gen_dataset(5, 2, OracleConfig(seed=2), seed=2)
        assert [t.target for t in ds.tasks] == [
            "cpu-xeon24",
            "cpu-small4",
            "gpu-t4ish",
            "gpu-bigsmem",
            "cpu-xeon24",
        ]

    def test_recorded_costs_match_oracle_rescoring(self):
        cfg = OracleConfig(noise_sigma=0.0, seed=4)
        ds = gen_dataset(3, 10, cfg, seed=4)
        for task in ds.tasks:
            hw = ds.hardware_of(task)
            records = ds.valid_records_of_task(task.task_id)
            assert len(records) >= 2
            rescored = [
                oracle_cost(task.kernel, r.schedule, hw, cfg) for r in records
            ]
            for rec, cost in zip(records, rescored):
                assert rec.mean_cost == cost
            best = min(records, key=lambda r: r.mean_cost)
            assert best.mean_cost == min(rescored)

    def test_within_task_order_stable_across_generations(self):
        cfg = OracleConfig(noise_sigma=0.0, seed=9)
        a = gen_dataset(3, 8, cfg, seed=9)
        b = gen_dataset(3, 8, cfg, seed=9)
        for task in a.tasks:
            order_a = [r.record_id for r in sorted(
                a.valid_records_of_task(task.task_id), key=lambda r: r.mean_cost
            )]
            order_b = [r.record_id for r in sorted(
                b.valid_records_of_task(task.task_id), key=lambda r: r.mean_cost
            )]
            assert order_a == order_b

    def test_zero_noise_costs_are_all_distinct(self):
        ds = gen_dataset(2, 12, OracleConfig(noise_sigma=0.0, seed=6), seed=6)
        for task in ds.tasks:
            costs = [r.mean_cost for r in ds.valid_records_of_task(task.task_id)]
            assert len(set(costs)) == len(costs)

    def test_error_fraction_zero_flags_nothing(self):
        ds = gen_dataset(3, 10, OracleConfig(seed=5), seed=5, error_fraction=0.0)
        assert not any(r.error_flag for r in ds.records)

    def test_size_and_fraction_validation(self):
        with pytest.raises(DataValidationError, match="sizes"):
            gen_dataset(0, 10, OracleConfig(seed=0))
        with pytest.raises(DataValidationError, match="error_fraction"):
            gen_dataset(1, 1, OracleConfig(seed=0), error_fraction=1.0)

    def test_build_kernel_shapes_are_well_formed(self):
        import numpy as np

        from tensortune.data import validate_kernel

        rng = np.random.default_rng(0)
        for i in range(20):
            kernel = build_kernel(i, rng)
            validate_kernel(kernel)
            assert flop_count(kernel) > 0
