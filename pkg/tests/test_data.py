"""Dataset schema, validation and persistence round-trips."""

from __future__ import annotations

import json

import numpy as np
import pytest

from tensortune.data import (
    Dataset,
    Kernel,
    MeasurementRecord,
    ScheduleConfig,
    Task,
    dumps_dataset,
    format_cost,
    load_dataset,
    loads_dataset,
    save_dataset,
    throughput,
    validate_record,
)
from tensortune.errors import DataValidationError
from tensortune.hardware import registry_by_id
from tensortune.oracle import OracleConfig, gen_dataset

from conftest import (
    CPU_ID,
    GPU_ID,
    build_dataset,
    make_add_kernel,
    make_record,
    plain_schedule,
)

HEADER = '{"format": "tensortune.v1"}'


class TestScheduleConfig:
    def test_json_round_trip(self):
        schedule = ScheduleConfig(
            tile_factors=((2, 4), (8,)),
            unroll_factor=4,
            vectorize_width=8,
            thread_binding=(16, 8),
        )
        assert ScheduleConfig.from_json(schedule.to_json()) == schedule

    def test_binding_omitted_when_unset(self):
        assert "thread_binding" not in plain_schedule(1).to_json()

    def test_unknown_fields_rejected(self):
        with pytest.raises(DataValidationError, match="unknown fields"):
            ScheduleConfig.from_json({"tile_factors": [[1]], "warp": 3})

    def test_malformed_binding_rejected(self):
        with pytest.raises(DataValidationError):
            ScheduleConfig.from_json({"tile_factors": [[1]], "thread_binding": [1]})


class TestKernelValidation:
    def test_zero_dimension_rejected(self):
        kernel = make_add_kernel(shape=(4, 0))
        with pytest.raises(DataValidationError):
            build_dataset([("t0", kernel, CPU_ID)], [])

    def test_unknown_op_rejected_at_build(self):
        kernel = Kernel(
            kernel_id="k0", op="not-an-op", input_shapes=((4,),), output_shape=(4,)
        )
        with pytest.raises(DataValidationError):
            build_dataset([("t0", kernel, CPU_ID)], [])

    def test_elementwise_binary_input_mismatch_rejected(self):
        kernel = Kernel(
            kernel_id="k0",
            op="elementwise-add",
            input_shapes=((4, 4), (4, 2)),
            output_shape=(4, 4),
        )
        with pytest.raises(DataValidationError):
            build_dataset([("t0", kernel, CPU_ID)], [])

    def test_duplicate_kernel_target_pair_rejected(self):
        kernel = make_add_kernel(shape=(8, 8))
        with pytest.raises(DataValidationError, match="duplicate"):
            build_dataset(
                [("t0", kernel, CPU_ID), ("t1", kernel, CPU_ID)],
                [],
            )


class TestValidateRecord:
    def _dataset(self):
        return build_dataset(
            [("t0", make_add_kernel(shape=(16, 16)), CPU_ID)],
            [make_record("r0", "t0", plain_schedule(2), 1e-4, flops=256)],
        )

    def test_valid_record_is_ok(self):
        ds = self._dataset()
        assert validate_record(ds.records[0], ds) == []

    def test_gpu_binding_on_cpu_target(self):
        ds = self._dataset()
        bad = make_record(
            "r1", "t0", plain_schedule(2, thread_binding=(8, 8)), 1e-4
        )
        assert "gpu-binding-on-cpu" in validate_record(bad, ds)

    def test_tile_divisibility(self):
        ds = self._dataset()
        bad = make_record(
            "r1",
            "t0",
            ScheduleConfig(tile_factors=((7,), (1,))),
            1e-4,
        )
        assert "tile-divisibility" in validate_record(bad, ds)

    def test_dangling_task(self):
        ds = self._dataset()
        bad = make_record("r1", "missing", plain_schedule(2), 1e-4)
        assert any(
            v.startswith("dangling-task") for v in validate_record(bad, ds)
        )

    def test_mutations_produce_exactly_their_violation(self):
        ds = self._dataset()
        cases = [
            (make_record("r1", "t0", plain_schedule(2), None), "missing-cost"),
            (make_record("r1", "t0", plain_schedule(2), -1.0), "non-positive-cost"),
            (
                make_record("r1", "t0", plain_schedule(2), 1e-4, error=True),
                "cost-on-error",
            ),
            (
                make_record(
                    "r1", "t0", plain_schedule(2, unroll_factor=0), 1e-4
                ),
                "bad-unroll-factor",
            ),
            (
                make_record(
                    "r1", "t0", plain_schedule(2, vectorize_width=0), 1e-4
                ),
                "bad-vectorize-width",
            ),
            (
                make_record("r1", "t0", plain_schedule(3), 1e-4),
                "tile-axes-mismatch",
            ),
        ]
        for rec, expected in cases:
            if expected == "cost-on-error":
                # Construct directly: make_record zeroes cost on error.
                rec = MeasurementRecord(
                    record_id="r1",
                    task_id="t0",
                    schedule=plain_schedule(2),
                    mean_cost=1e-4,
                    measured_flops=0,
                    error_flag=True,
                )
            violations = validate_record(rec, ds)
            assert violations == [expected], (expected, violations)

    def test_throughput_is_flops_over_cost(self):
        rec = make_record("r0", "t0", plain_schedule(2), 2.0, flops=256)
        assert throughput(rec) == pytest.approx(128.0)
        err = make_record("r1", "t0", plain_schedule(2), None, error=True)
        with pytest.raises(DataValidationError):
            throughput(err)


class TestPersistence:
    def test_empty_dataset_round_trip(self, tmp_path):
        ds = Dataset.build([], [], [])
        path = tmp_path / "empty.ds"
        save_dataset(ds, path)
        assert path.read_text() == HEADER + "\n"
        loaded = load_dataset(path)
        assert loaded.records == [] and loaded.tasks == [] and loaded.hardware == []

    def test_file_with_zero_records_loads(self):
        loaded = loads_dataset(HEADER + "\n")
        assert loaded.records == []

    def test_generated_dataset_round_trips_exactly(self, tmp_path):
        ds = gen_dataset(3, 10, OracleConfig(seed=5), seed=5)
        assert len(ds.records) == 30
        path = tmp_path / "gen.ds"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.hardware == ds.hardware
        assert loaded.tasks == ds.tasks
        assert loaded.records == ds.records

    def test_double_round_trip_is_byte_identical(self, tmp_path):
        ds = gen_dataset(3, 10, OracleConfig(seed=9), seed=9)
        first = tmp_path / "a.ds"
        second = tmp_path / "b.ds"
        save_dataset(ds, first)
        save_dataset(load_dataset(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_error_record_serialized_without_cost(self):
        ds = build_dataset(
            [("t0", make_add_kernel(shape=(8, 8)), CPU_ID)],
            [make_record("r0", "t0", plain_schedule(2), None, error=True)],
        )
        line = dumps_dataset(ds).splitlines()[-1]
        obj = json.loads(line)
        assert obj["type"] == "record"
        assert "mean_cost" not in obj
        assert obj["error_flag"] is True

    def test_costs_carry_nine_significant_digits(self):
        # Short reprs are padded out to nine significant digits.
        assert format_cost(2e-3) == "2.00000000e-03"
        for value in (1.0 / 3.0, 0.1 + 0.2, 1.2345e-7, 2e-3):
            text = format_cost(value)
            digits = "".join(c for c in text.split("e")[0] if c.isdigit()).lstrip("0")
            assert len(digits) >= 9
            assert float(text) == value  # exact round-trip regardless

    def test_record_with_missing_task_names_the_record(self):
        text = "\n".join(
            [
                HEADER,
                json.dumps(
                    {
                        "type": "record",
                        "record_id": "r-ghost",
                        "task_id": "t-missing",
                        "schedule": {"tile_factors": [[1]]},
                        "mean_cost": 1e-4,
                        "measured_flops": 10,
                    }
                ),
            ]
        )
        with pytest.raises(DataValidationError, match="r-ghost"):
            loads_dataset(text)

    def test_malformed_line_reports_line_number(self):
        text = HEADER + "\n{not json}\n"
        with pytest.raises(DataValidationError, match="line 2"):
            loads_dataset(text)

    def test_missing_header_rejected(self):
        with pytest.raises(DataValidationError, match="line 1"):
            loads_dataset('{"type": "record"}\n')

    def test_unknown_fields_strict_vs_lenient(self):
        hw = registry_by_id()[CPU_ID].to_json()
        hw["type"] = "hardware"
        hw_extra = dict(hw)
        hw_extra["vendor_notes"] = "engineering sample"
        text = HEADER + "\n" + json.dumps(hw_extra) + "\n"
        with pytest.raises(DataValidationError, match="unknown fields"):
            loads_dataset(text)
        loaded = loads_dataset(text, lenient=True)
        assert loaded.hardware[0].target_id == CPU_ID

    def test_unknown_line_type_rejected(self):
        text = HEADER + '\n{"type": "note", "body": "hi"}\n'
        with pytest.raises(DataValidationError, match="unknown line type"):
            loads_dataset(text)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope.ds")

    def test_hostile_record_id_with_sentinel_text_rejected(self):
        rec = make_record("@@MEAN-COST-SENTINEL@@", "t0", plain_schedule(2), 1e-4)
        ds = build_dataset(
            [("t0", make_add_kernel(shape=(8, 8)), CPU_ID)], [rec]
        )
        with pytest.raises(DataValidationError, match="sentinel"):
            dumps_dataset(ds)


class TestDatasetIndexes:
    def test_lookup_tables_consistent(self, small_dataset):
        ds = small_dataset
        for rec in ds.records:
            assert ds.record_by_id[rec.record_id] is rec
            assert rec.record_id in ds.records_by_task[rec.task_id]
        for task in ds.tasks:
            assert ds.task_by_id[task.task_id] is task
            assert task.task_id in ds.tasks_by_target[task.target]

    def test_valid_records_exclude_errors(self, small_dataset):
        valid = small_dataset.valid_records_of_task("t-add")
        assert all(not r.error_flag for r in valid)
        assert len(valid) == 4

    def test_subset_tasks_keeps_order(self, small_dataset):
        subset = small_dataset.subset_tasks(["t-relu", "t-add"])
        assert [t.task_id for t in subset.tasks] == ["t-add", "t-relu"]
        assert all(r.task_id in ("t-add", "t-relu") for r in subset.records)

    def test_duplicate_record_id_rejected(self):
        kernel = make_add_kernel(shape=(8, 8))
        records = [
            make_record("r0", "t0", plain_schedule(2), 1e-4),
            make_record("r0", "t0", plain_schedule(2), 2e-4),
        ]
        with pytest.raises(DataValidationError, match="duplicate record_id"):
            build_dataset([("t0", kernel, CPU_ID)], records)
