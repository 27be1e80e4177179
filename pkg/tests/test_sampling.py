"""Tests for invalid-record filtering, task weighting, and pruning."""

from __future__ import annotations

import json

import pytest

from tensortune.errors import DataValidationError
from tensortune.sampling import (
    PruneReport,
    SamplerConfig,
    filter_invalid,
    prune_dataset,
    prune_report_json,
    task_priority_order,
    task_weights,
)
from tensortune.workload import flop_count

from conftest import CPU_ID, build_dataset, make_add_kernel, make_record, plain_schedule


def uniform_dataset(n_tasks, records_per_task, errors_per_task=0, shape=(64,)):
    """n_tasks equal-op tasks with distinct within-task throughputs."""
    task_specs = []
    record_specs = []
    for t in range(n_tasks):
        tid = f"t{t:03d}"
        task_specs.append((tid, make_add_kernel(kernel_id=f"k{t:03d}", shape=shape), CPU_ID))
        for i in range(records_per_task):
            record_specs.append(
                make_record(f"r{t:03d}-{i:03d}", tid, plain_schedule(1), (1 + i) * 1e-4)
            )
        for i in range(errors_per_task):
            record_specs.append(
                make_record(f"r{t:03d}-e{i}", tid, plain_schedule(1), None, error=True)
            )
    return build_dataset(task_specs, record_specs)


class TestFilterInvalid:
    def test_error_records_alone_quantile_zero(self):
        # 100 records, 5 flagged as errors, quantile 0: exactly 95 survive.
        ds = uniform_dataset(5, 19, errors_per_task=1)
        assert len(ds.records) == 100
        out = filter_invalid(ds, SamplerConfig(low_perf_quantile=0.0, min_records_per_task=1))
        assert len(out.records) == 95
        assert not any(r.error_flag for r in out.records)

    def test_quantile_tenth_drops_unique_slowest_of_ten(self):
        ds = uniform_dataset(1, 10)
        out = filter_invalid(ds, SamplerConfig(low_perf_quantile=0.1, min_records_per_task=1))
        kept = {r.record_id for r in out.records}
        # Costs are (1+i)e-4, so r000-009 is the strict throughput minimum.
        assert kept == {f"r000-{i:03d}" for i in range(9)}

    def test_sparse_task_removed_entirely(self):
        ds = uniform_dataset(2, 3)
        cfg = SamplerConfig(low_perf_quantile=0.0, min_records_per_task=8)
        out = filter_invalid(ds, cfg)
        assert out.tasks == [] and out.records == []

    def test_quantile_zero_keeps_every_valid_record(self):
        ds = uniform_dataset(3, 12, errors_per_task=2)
        out = filter_invalid(ds, SamplerConfig(low_perf_quantile=0.0, min_records_per_task=1))
        assert len(out.records) == 3 * 12

    def test_threshold_counts_apply_after_quantile_cut(self):
        # 8 survivors of 9 records still satisfy min_records_per_task=8,
        # but 8 records cut to 7 do not.
        ds = uniform_dataset(1, 9)
        cfg = SamplerConfig(low_perf_quantile=0.12, min_records_per_task=8)
        out = filter_invalid(ds, cfg)
        assert len(out.records) == 8
        ds_small = uniform_dataset(1, 8)
        out_small = filter_invalid(ds_small, cfg)
        assert out_small.records == []

    def test_config_validation(self):
        with pytest.raises(DataValidationError, match="target_fraction"):
            SamplerConfig(target_fraction=0.0).validate()
        with pytest.raises(DataValidationError, match="low_perf_quantile"):
            SamplerConfig(low_perf_quantile=1.0).validate()
        with pytest.raises(DataValidationError, match="min_records_per_task"):
            SamplerConfig(min_records_per_task=0).validate()


class TestTaskWeights:
    def test_single_task_gets_full_weight(self):
        ds = uniform_dataset(1, 4)
        assert task_weights(ds) == {"t000": 1.0}

    def test_flops_ratio_splits_weight(self):
        ds = build_dataset(
            task_specs=[
                ("t-small", make_add_kernel(kernel_id="k-s", shape=(100,)), CPU_ID),
                ("t-big", make_add_kernel(kernel_id="k-b", shape=(300,)), CPU_ID),
            ],
            record_specs=[
                make_record("r0", "t-small", plain_schedule(1), 1e-4),
                make_record("r1", "t-big", plain_schedule(1), 1e-4),
            ],
        )
        weights = task_weights(ds)
        assert weights["t-small"] == pytest.approx(0.25)
        assert weights["t-big"] == pytest.approx(0.75)

    def test_operator_occurrence_scales_weight(self):
        task_specs = [
            (f"t-add{i}", make_add_kernel(kernel_id=f"ka{i}", shape=(64,)), CPU_ID)
            for i in range(3)
        ]
        mul = make_add_kernel(kernel_id="km", shape=(64,))
        mul = type(mul)(
            kernel_id="km",
            op="elementwise-multiply",
            input_shapes=mul.input_shapes,
            output_shape=mul.output_shape,
        )
        task_specs.append(("t-mul", mul, CPU_ID))
        record_specs = [
            make_record(f"r{i}", tid, plain_schedule(1), 1e-4)
            for i, (tid, _, _) in enumerate(task_specs)
        ]
        weights = task_weights(build_dataset(task_specs, record_specs))
        # Equal flops, occurrences 3 vs 1: each add task weighs 3x the mul task.
        assert weights["t-add0"] == pytest.approx(3 * weights["t-mul"])
        assert sum(weights.values()) == pytest.approx(1.0, abs=1e-12)

    def test_empty_dataset_rejected(self):
        ds = build_dataset(task_specs=[], record_specs=[])
        with pytest.raises(DataValidationError, match="no tasks"):
            task_weights(ds)

    def test_priority_order_descends_with_id_tiebreak(self):
        ds = build_dataset(
            task_specs=[
                ("t-b", make_add_kernel(kernel_id="k1", shape=(64,)), CPU_ID),
                ("t-a", make_add_kernel(kernel_id="k2", shape=(64,)), CPU_ID),
                ("t-c", make_add_kernel(kernel_id="k3", shape=(256,)), CPU_ID),
            ],
            record_specs=[
                make_record("r0", "t-b", plain_schedule(1), 1e-4),
                make_record("r1", "t-a", plain_schedule(1), 1e-4),
                make_record("r2", "t-c", plain_schedule(1), 1e-4),
            ],
        )
        assert task_priority_order(ds) == ["t-c", "t-a", "t-b"]
        assert task_priority_order(ds, ["t-b", "t-a"]) == ["t-a", "t-b"]


class TestPruneDataset:
    def test_full_fraction_clean_data_is_identity(self):
        ds = uniform_dataset(4, 10)
        cfg = SamplerConfig(target_fraction=1.0, low_perf_quantile=0.0, min_records_per_task=1)
        pruned, report = prune_dataset(ds, cfg)
        assert {r.record_id for r in pruned.records} == {r.record_id for r in ds.records}
        assert report.realized_fraction == 1.0
        assert not report.fraction_unachievable

    def test_realized_fraction_within_crossing_bound(self):
        ds = uniform_dataset(50, 20)  # 1000 records, tasks of 20
        cfg = SamplerConfig(
            target_fraction=0.57, low_perf_quantile=0.0, min_records_per_task=1, seed=3
        )
        pruned, report = prune_dataset(ds, cfg)
        assert 0.57 <= report.realized_fraction <= 0.57 + 20 / 1000
        assert report.realized_fraction == len(pruned.records) / 1000

    def test_same_seed_reproduces_output(self):
        ds = uniform_dataset(12, 10)
        cfg = SamplerConfig(
            target_fraction=0.5, low_perf_quantile=0.0, min_records_per_task=1, seed=11
        )
        a, report_a = prune_dataset(ds, cfg)
        b, report_b = prune_dataset(ds, cfg)
        assert {r.record_id for r in a.records} == {r.record_id for r in b.records}
        assert report_a.sampled_task_order == report_b.sampled_task_order

    def test_tasks_kept_whole(self):
        ds = uniform_dataset(10, 10)
        cfg = SamplerConfig(
            target_fraction=0.42, low_perf_quantile=0.1, min_records_per_task=1, seed=7
        )
        pruned, _ = prune_dataset(ds, cfg)
        filtered = filter_invalid(ds, cfg)
        for task in pruned.tasks:
            assert len(pruned.records_by_task[task.task_id]) == len(
                filtered.records_by_task[task.task_id]
            )

    def test_output_is_subset_of_input(self):
        ds = uniform_dataset(8, 10, errors_per_task=1)
        cfg = SamplerConfig(
            target_fraction=0.5, low_perf_quantile=0.1, min_records_per_task=4, seed=2
        )
        pruned, _ = prune_dataset(ds, cfg)
        input_ids = {r.record_id for r in ds.records}
        assert {r.record_id for r in pruned.records} <= input_ids

    def test_unachievable_fraction_returns_all_filtered_tasks(self):
        # Half the tasks are too sparse to survive filtering, so the
        # post-filter pool cannot reach 90% of the original count.
        task_specs = []
        record_specs = []
        for t in range(6):
            tid = f"t{t}"
            task_specs.append((tid, make_add_kernel(kernel_id=f"k{t}", shape=(64,)), CPU_ID))
            n = 10 if t < 3 else 2
            for i in range(n):
                record_specs.append(
                    make_record(f"r{t}-{i}", tid, plain_schedule(1), (1 + i) * 1e-4)
                )
        ds = build_dataset(task_specs, record_specs)
        cfg = SamplerConfig(
            target_fraction=0.9, low_perf_quantile=0.0, min_records_per_task=8, seed=0
        )
        pruned, report = prune_dataset(ds, cfg)
        assert report.fraction_unachievable
        assert len(pruned.records) == 30  # every surviving task, in full
        assert report.records_after_filter == 30

    def test_empty_dataset_rejected(self):
        ds = build_dataset(task_specs=[], record_specs=[])
        with pytest.raises(DataValidationError, match="no records"):
            prune_dataset(ds, SamplerConfig())

    def test_high_weight_tasks_preferentially_kept(self):
        # Task flops span 2^6..2^17; across seeds the kept weight mass should
        # comfortably exceed half the kept record fraction.
        task_specs = []
        record_specs = []
        for t in range(12):
            tid = f"t{t:02d}"
            task_specs.append(
                (tid, make_add_kernel(kernel_id=f"k{t:02d}", shape=(2 ** (6 + t),)), CPU_ID)
            )
            for i in range(10):
                record_specs.append(
                    make_record(f"r{t:02d}-{i}", tid, plain_schedule(1), (1 + i) * 1e-4)
                )
        ds = build_dataset(task_specs, record_specs)
        weights = task_weights(ds)
        hits = 0
        for seed in range(20):
            cfg = SamplerConfig(
                target_fraction=0.5, low_perf_quantile=0.0, min_records_per_task=1, seed=seed
            )
            pruned, report = prune_dataset(ds, cfg)
            mass = sum(weights[t.task_id] for t in pruned.tasks)
            assert mass == pytest.approx(report.retained_weight_mass)
            if mass >= report.realized_fraction * 0.5:
                hits += 1
        assert hits >= 18

    def test_report_bookkeeping(self):
        ds = uniform_dataset(6, 10, errors_per_task=2)
        cfg = SamplerConfig(
            target_fraction=0.4, low_perf_quantile=0.1, min_records_per_task=4, seed=9
        )
        pruned, report = prune_dataset(ds, cfg)
        assert report.records_before == len(ds.records)
        assert report.records_after == len(pruned.records)
        assert report.tasks_after == len(pruned.tasks)
        before_total = sum(b for b, _ in report.per_op_records.values())
        after_total = sum(a for _, a in report.per_op_records.values())
        assert before_total == len(ds.records)
        assert after_total == len(pruned.records)
        assert report.config == cfg

    def test_report_serialization_round_trip(self):
        ds = uniform_dataset(4, 10)
        cfg = SamplerConfig(
            target_fraction=0.5, low_perf_quantile=0.0, min_records_per_task=1, seed=1
        )
        _, report = prune_dataset(ds, cfg)
        parsed = json.loads(prune_report_json(report))
        assert parsed["records_before"] == report.records_before
        assert parsed["config"]["seed"] == 1
        text = report.to_text()
        assert "records:" in text and "elementwise-add" in text
