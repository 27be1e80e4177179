"""Command-line entry point orchestrating the tuning pipeline.

Subcommands: gen, characterize, prune, split, train, eval, tune, transfer,
report, hw. Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numeric failure. Results go to files or standard output; diagnostics go to
the error stream. Identical arguments and inputs produce byte-identical
outputs, with run manifests (which record wall time) as the one exception.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .data import load_dataset, save_dataset
from .errors import DataValidationError, NumericFailure, TensorTuneError
from .hardware import FEATURE_SLOTS, registry, registry_by_id
from .manifest import RunManifest
from .models import (
    GBDTConfig,
    TrainConfig,
    evaluate,
    load_model,
    make_schedule_scorer,
    per_task_metrics,
    save_model,
    train_gbdt,
    train_mlp,
    train_tuner,
)
from .oracle import OracleConfig, gen_dataset, oracle_cost
from .sampling import SamplerConfig, prune_dataset, prune_report_json
from .search import SearchConfig, tune
from .splits import save_split, load_split, split
from .transfer import SCOPES, TransferConfig, adapt_hardware, fine_tune
from .workload import characterize, characterization_table


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; we map usage to 1
        raise UsageError(message)


def _resolve_seed(value: int | None) -> int:
    """Explicit seed wins; TENSORTUNE_SEED covers unset seeds; else 0."""
    if value is not None:
        return value
    env = os.environ.get("TENSORTUNE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"TENSORTUNE_SEED must be an integer, got {env!r}") from exc


def _echo_params(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        out[key] = value if isinstance(value, (int, float, bool, type(None))) else str(value)
    return out


def _finish_manifest(
    args: argparse.Namespace,
    command: str,
    seed: int | None,
    inputs: list[str | Path],
    outputs: list[str | Path],
    started: float,
) -> None:
    """Write one manifest next to the command's outputs (if it has any)."""
    manifest_path = getattr(args, "manifest", None)
    if manifest_path is None:
        if not outputs:
            return
        manifest_path = str(outputs[0]) + ".manifest.json"
    manifest = RunManifest(
        command=command,
        parameters=_echo_params(args),
        seed=seed,
        wall_time_s=time.monotonic() - started,
    )
    for path in inputs:
        manifest.add_input(path)
    for path in outputs:
        manifest.add_output(path)
    manifest.save(manifest_path)


def _load_json(path: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataValidationError(f"{path}: expected a JSON object")
    return obj


def _resolve_hardware(ds, target_id: str):
    hw = ds.hardware_by_id.get(target_id) or registry_by_id().get(target_id)
    if hw is None:
        raise DataValidationError(f"unknown target {target_id!r}")
    return hw


# -- subcommand implementations ----------------------------------------------


def _cmd_gen(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    if args.oracle:
        cfg = OracleConfig.from_json(_load_json(args.oracle))
    else:
        cfg = OracleConfig()
    hardware = None
    if args.targets:
        by_id = registry_by_id()
        picked = []
        for tid in args.targets.split(","):
            tid = tid.strip()
            if tid not in by_id:
                raise DataValidationError(f"unknown target {tid!r}")
            picked.append(by_id[tid])
        hardware = tuple(picked)
    ds = gen_dataset(
        args.tasks,
        args.records,
        cfg,
        hardware=hardware,
        seed=seed,
        error_fraction=args.error_fraction,
    )
    save_dataset(ds, args.out)
    inputs = [args.oracle] if args.oracle else []
    _finish_manifest(args, "gen", seed, inputs, [args.out], started)
    print(f"wrote {len(ds.records)} records / {len(ds.tasks)} tasks to {args.out}")
    return 0


def _cmd_characterize(args: argparse.Namespace) -> int:
    started = time.monotonic()
    ds = load_dataset(args.dataset, lenient=args.lenient)
    entries = characterize(ds)
    table = characterization_table(entries)
    print(table)
    outputs = []
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
        outputs.append(args.out)
    if args.jsonl:
        lines = [json.dumps(e.to_json(), sort_keys=True) for e in entries]
        Path(args.jsonl).write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(args.jsonl)
    _finish_manifest(args, "characterize", None, [args.dataset], outputs, started)
    return 0


def _cmd_hw(args: argparse.Namespace) -> int:
    if args.action != "list":
        raise UsageError(f"unknown hw action {args.action!r}")
    slots = [s for s in FEATURE_SLOTS if s != "hardware_class"]
    header = ["target", "class", *slots]
    rows = [header]
    for hw in registry():
        row = [hw.target_id, hw.hardware_class]
        for slot in slots:
            value = getattr(hw, slot)
            row.append("-" if value is None else str(value))
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return 0


def _cmd_prune(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    ds = load_dataset(args.input, lenient=args.lenient)
    cfg = SamplerConfig(
        target_fraction=args.fraction,
        low_perf_quantile=args.quantile,
        min_records_per_task=args.min_records,
        seed=seed,
    )
    pruned, report = prune_dataset(ds, cfg)
    save_dataset(pruned, args.output)
    outputs = [args.output]
    if args.report:
        Path(args.report).write_text(report.to_text() + "\n", encoding="utf-8")
        outputs.append(args.report)
    if args.report_json:
        Path(args.report_json).write_text(
            prune_report_json(report) + "\n", encoding="utf-8"
        )
        outputs.append(args.report_json)
    _finish_manifest(args, "prune", seed, [args.input], outputs, started)
    print(
        f"kept {report.records_after} of {report.records_before} records "
        f"(realized fraction {report.realized_fraction:.4f})"
    )
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    ds = load_dataset(args.input, lenient=args.lenient)
    assignment = split(ds, args.strategy, args.ratio, seed)
    save_split(assignment, args.out)
    _finish_manifest(args, "split", seed, [args.input], [args.out], started)
    print(
        f"{args.strategy}: {len(assignment.train_ids)} train / "
        f"{len(assignment.test_ids)} test record ids -> {args.out}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    started = time.monotonic()
    ds = load_dataset(args.input, lenient=args.lenient)
    assignment = load_split(args.split)
    config_obj = _load_json(args.config) if args.config else {}
    if args.seed is not None or "seed" not in config_obj:
        config_obj["seed"] = _resolve_seed(args.seed)
    try:
        if args.model == "gbdt":
            config_obj.pop("seed", None)  # tree growth is deterministic
            model, report = train_gbdt(ds, assignment, GBDTConfig.from_json(config_obj))
        elif args.model == "mlp":
            model, report = train_mlp(ds, assignment, TrainConfig.from_json(config_obj))
        else:
            model, report = train_tuner(ds, assignment, TrainConfig.from_json(config_obj))
    except TypeError as exc:
        raise DataValidationError(f"bad config for {args.model}: {exc}") from exc
    save_model(model, args.out)
    outputs = [args.out]
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        outputs.append(args.report)
    _finish_manifest(
        args, "train", config_obj.get("seed"), [args.input, args.split], outputs, started
    )
    val = "n/a" if report.val_rmse is None else f"{report.val_rmse:.6f}"
    print(
        f"{args.model}: n_train={report.n_train} n_test={report.n_test} "
        f"train_rmse={report.train_rmse:.6f} val_rmse={val}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    ds = load_dataset(args.input, lenient=args.lenient)
    assignment = load_split(args.split)
    model = load_model(args.model)
    report = evaluate(model, ds, assignment)
    rows = [
        ("kind", report.kind),
        ("train_rmse", f"{report.train_rmse:.6f}"),
        ("test_rmse", f"{report.test_rmse:.6f}"),
        ("test_pairwise_accuracy", _fmt_opt(report.test_pairwise_accuracy)),
        ("test_top1", _fmt_opt(report.test_top1)),
        ("test_top5", _fmt_opt(report.test_top5)),
        ("tasks_evaluated", str(report.tasks_evaluated)),
        ("tasks_skipped", str(report.tasks_skipped)),
    ]
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value}")
    outputs = []
    if args.records:
        lines = [
            json.dumps(row, sort_keys=True)
            for row in per_task_metrics(model, ds, assignment)
        ]
        Path(args.records).write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(args.records)
    _finish_manifest(
        args, "eval", None, [args.input, args.split, args.model], outputs, started
    )
    return 0


def _fmt_opt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6f}"


def _parse_oracle_spec(spec: str) -> OracleConfig:
    if not spec.startswith("synth:"):
        raise UsageError(
            f"unsupported oracle spec {spec!r}; expected synth:[config.json]"
        )
    path = spec[len("synth:") :]
    if not path:
        return OracleConfig()
    return OracleConfig.from_json(_load_json(path))


def _cmd_tune(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    ds = load_dataset(args.input, lenient=args.lenient)
    model = load_model(args.model)
    ocfg = _parse_oracle_spec(args.oracle)
    if args.tasks:
        task_ids = [t.strip() for t in args.tasks.split(",") if t.strip()]
    else:
        task_ids = [t.task_id for t in ds.tasks]
    cfg = SearchConfig(
        method=args.method,
        steps=args.steps,
        population=args.population,
        generations=args.generations,
        top_k=args.topk,
        seed=seed,
    )

    def scorer_factory(tid: str):
        return make_schedule_scorer(model, ds.task_by_id[tid], ds)

    def oracle_fn(kernel, schedule, hw):
        return oracle_cost(kernel, schedule, hw, ocfg)

    result = tune(ds, task_ids, scorer_factory, oracle_fn, cfg, jobs=args.jobs)
    header = ["task", "best_cost", "model_score", "oracle_calls"]
    lines = ["  ".join(header)]
    for entry in result.entries:
        lines.append(
            f"{entry.task_id}  {entry.best_cost:.9e}  "
            f"{entry.model_score:.6f}  {entry.oracle_calls}"
        )
    lines.append(
        f"total  {result.total_best_cost:.9e}  -  {result.total_oracle_calls}"
    )
    text = "\n".join(lines)
    print(text)
    outputs = []
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
        outputs.append(args.report)
    if args.report_json:
        Path(args.report_json).write_text(
            json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        outputs.append(args.report_json)
    inputs = [args.input, args.model]
    oracle_path = args.oracle[len("synth:") :]
    if oracle_path:
        inputs.append(oracle_path)
    _finish_manifest(args, "tune", seed, inputs, outputs, started)
    return 0


def _cmd_transfer(args: argparse.Namespace) -> int:
    started = time.monotonic()
    seed = _resolve_seed(args.seed)
    ds = load_dataset(args.input, lenient=args.lenient)
    model = load_model(args.model)
    src = _resolve_hardware(ds, args.src)
    dst = _resolve_hardware(ds, args.dst)
    adapted, mapping = adapt_hardware(model, src, dst)
    cfg = TransferConfig(
        target=dst.target_id,
        record_budget=args.budget,
        fine_tune_scope=args.scope,
        fine_tune_epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=seed,
    )
    tuned, report = fine_tune(adapted, ds, cfg, mapping)
    save_model(tuned, args.out)
    outputs = [args.out]
    if args.report:
        Path(args.report).write_text(report.to_text() + "\n", encoding="utf-8")
        outputs.append(args.report)
    if args.report_json:
        Path(args.report_json).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        outputs.append(args.report_json)
    _finish_manifest(args, "transfer", seed, [args.input, args.model], outputs, started)
    print(
        f"transfer {src.target_id} -> {dst.target_id}: "
        f"pca {_fmt_opt(report.pca_before)} -> {_fmt_opt(report.pca_after)}"
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    for path in args.files:
        obj = _load_json(path)
        print(f"== {path}")
        _print_aligned(obj)
    return 0


def _print_aligned(obj: dict, indent: str = "") -> None:
    keys = list(obj.keys())
    width = max((len(k) for k in keys), default=0)
    for key in keys:
        value = obj[key]
        if isinstance(value, dict):
            print(f"{indent}{key}:")
            _print_aligned(value, indent + "  ")
        elif isinstance(value, list):
            print(f"{indent}{key:<{width}}  [{len(value)} entries]")
        else:
            print(f"{indent}{key:<{width}}  {value}")


# -- parser wiring -------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="tensortune", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic measured dataset")
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--records", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--oracle", default=None, help="oracle config JSON path")
    p.add_argument("--targets", default=None, help="comma-separated target ids")
    p.add_argument("--error-fraction", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("characterize", help="per-operator dataset summary")
    p.add_argument("dataset")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", default=None, help="also write the table to a file")
    p.add_argument("--jsonl", default=None, help="line-delimited entries file")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_characterize)

    p = sub.add_parser("hw", help="hardware registry utilities")
    p.add_argument("action", choices=["list"])
    p.set_defaults(func=_cmd_hw)

    p = sub.add_parser("prune", help="filter and down-sample a dataset")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--quantile", type=float, default=0.1)
    p.add_argument("--min-records", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--report", default=None)
    p.add_argument("--report-json", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("split", help="partition records into train/test")
    p.add_argument("input")
    p.add_argument("--strategy", required=True, choices=["within_task", "by_task", "by_target"])
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="fit a cost model")
    p.add_argument("input")
    p.add_argument("--model", required=True, choices=["gbdt", "mlp", "tuner"])
    p.add_argument("--config", default=None, help="hyperparameter JSON path")
    p.add_argument("--split", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="worker pool width (one model trains at a time; kept for symmetry)",
    )
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a model against a split")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--records", default=None, help="per-task line-delimited output")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("tune", help="search schedules and measure the best")
    p.add_argument("input", help="dataset supplying tasks and hardware")
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="anneal", choices=["anneal", "evolve"])
    p.add_argument("--topk", type=int, default=8)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--population", type=int, default=32)
    p.add_argument("--generations", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--oracle", required=True, help="synth:[config.json]")
    p.add_argument("--tasks", default=None, help="comma-separated task ids")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--report", default=None)
    p.add_argument("--report-json", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("transfer", help="adapt and fine-tune across hardware")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--scope", default="heads-only", choices=list(SCOPES))
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--report-json", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("report", help="render saved JSON reports as text")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=_cmd_report)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version print and exit 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataValidationError, TensorTuneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
