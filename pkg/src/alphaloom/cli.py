"""Command-line surface.

Subcommands: ingest, eval, backtest, compile, mine, run.  Exit codes:
0 success, 1 runtime error, 2 usage or parse error.  Machine-readable
output (--json where offered) emits the canonical record formats.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date as Date
from pathlib import Path

import numpy as np

from .agents import HttpBackend, HttpBackendConfig, ScriptedBackend, mine_logic
from .backtest import (
    StrategyConfig,
    build_report,
    format_report_table,
    run_test_backtest,
    scores_from_expression,
)
from .dsl import evaluate, parse
from .errors import (
    AlphaloomError,
    DslError,
    RecordError,
    SchemaVersionError,
)
from .loops import (
    LoopSettings,
    Objective,
    PipelineEngine,
    RunStore,
    final_evaluation,
    outer_loop,
    start_outer_state,
)
from .logic import canonicalize_fields, compile_constraints, load_library, serialize
from .panel import SplitSpec, export_csv, filter_universe, forward_returns, ingest_csv
from .records import SCHEMA_VERSION, dumps_canonical, loads_record

USAGE_ERRORS = (DslError, SchemaVersionError)


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    for name in ("train", "validation", "test"):
        p.add_argument(
            f"--{name}",
            nargs=2,
            metavar=("START", "END"),
            required=True,
            help=f"{name} interval, ISO dates (inclusive)",
        )


def _splits_from_args(args) -> SplitSpec:
    return SplitSpec.from_strings(tuple(args.train), tuple(args.validation), tuple(args.test))


def _add_strategy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--n-drop", type=int, default=5)
    p.add_argument("--buy-cost", type=float, default=0.0005)
    p.add_argument("--sell-cost", type=float, default=0.0015)
    p.add_argument("--annualization", type=int, default=252)


def _strategy_from_args(args) -> StrategyConfig:
    return StrategyConfig(
        top_k=args.top_k,
        n_drop=args.n_drop,
        buy_cost=args.buy_cost,
        sell_cost=args.sell_cost,
        annualization=args.annualization,
    )


def cmd_ingest(args) -> int:
    panel = ingest_csv(args.csv)
    panel = filter_universe(panel, args.min_days)
    export_csv(panel, args.out)
    print(
        f"wrote {args.out}: {panel.n_dates} dates x {panel.n_instruments} instruments "
        f"(min_days={args.min_days})"
    )
    return 0


def cmd_eval(args) -> int:
    expr = parse(args.expr)
    panel = ingest_csv(args.panel)
    values = evaluate(expr, panel)
    row = values[panel.date_index(Date.fromisoformat(args.date))]
    if args.json:
        record = {
            "schema_version": SCHEMA_VERSION,
            "expression": args.expr,
            "date": args.date,
            "values": {
                symbol: (None if np.isnan(v) else float(v))
                for symbol, v in zip(panel.instruments, row)
            },
        }
        print(dumps_canonical(record))
        return 0
    for symbol, value in zip(panel.instruments, row):
        print(f"{symbol:<12} {'NA' if np.isnan(value) else f'{value:.6f}'}")
    return 0


def cmd_backtest(args) -> int:
    panel = filter_universe(ingest_csv(args.panel), args.min_days)
    splits = _splits_from_args(args)
    splits.validate_against(panel)
    config = _strategy_from_args(args)
    scores = scores_from_expression(args.expr, panel)
    returns = forward_returns(panel, args.horizon)
    if args.split == "test":
        report = run_test_backtest(
            scores, panel, returns, splits, config, final_run=args.final
        )
    else:
        report = build_report(args.split, scores, panel, returns, splits, config)
    if args.json:
        print(dumps_canonical(report.to_record(include_series=args.series)))
    else:
        print(format_report_table([report]))
    return 0


def cmd_compile(args) -> int:
    text = Path(args.logic).read_text(encoding="utf-8")
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordError(f"logic record is not valid JSON: {exc}") from exc
    h_struct = canonicalize_fields(record)
    gamma = compile_constraints(h_struct)
    print(serialize(gamma))
    return 0


def _backend_from_args(args):
    if args.backend == "scripted":
        if not args.fixtures:
            raise AlphaloomError("scripted backend requires --fixtures")
        return ScriptedBackend.from_file(args.fixtures)
    return HttpBackend(
        HttpBackendConfig(
            endpoint=args.endpoint,
            model=args.model,
            credential_env=args.credential_env,
        )
    )


def cmd_mine(args) -> int:
    backend = _backend_from_args(args)
    lines = Path(args.factors).read_text(encoding="utf-8").splitlines()
    formulas = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    records = []
    skipped = 0
    for formula in formulas:
        try:
            parse(formula)
        except DslError as exc:
            print(f"warning: skipping unparseable formula {formula!r}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        logic = mine_logic(formula, backend)
        records.append(logic.to_record())
    with open(args.out, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_canonical(record) + "\n")
    print(f"mined {len(records)} logic(s) from {len(formulas)} formula(s), skipped {skipped}")
    return 0


def load_run_config(path: str | Path) -> dict:
    """Read and validate a run config, resolving paths relative to the file."""
    path = Path(path)
    config = loads_record(path.read_text(encoding="utf-8"))
    for key in ("data", "splits", "backend", "initial_library", "output_dir"):
        if key not in config:
            raise RecordError(f"run config missing required field {key!r}")
    base = path.parent
    config["data"] = dict(config["data"])
    config["data"]["csv"] = str((base / config["data"]["csv"]).resolve())
    config["initial_library"] = str((base / config["initial_library"]).resolve())
    config["output_dir"] = str((base / config["output_dir"]).resolve())
    backend = dict(config["backend"])
    if backend.get("kind") == "scripted":
        backend["fixtures"] = str((base / backend["fixtures"]).resolve())
    config["backend"] = backend
    if not Path(config["data"]["csv"]).exists():
        raise AlphaloomError(f"data file not found: {config['data']['csv']}")
    if not Path(config["initial_library"]).exists():
        raise AlphaloomError(f"initial library not found: {config['initial_library']}")
    return config


def _build_run_backend(backend_cfg: dict):
    kind = backend_cfg.get("kind")
    if kind == "scripted":
        return ScriptedBackend.from_file(backend_cfg["fixtures"])
    if kind == "http":
        return HttpBackend(
            HttpBackendConfig(
                endpoint=backend_cfg["endpoint"],
                model=backend_cfg["model"],
                credential_env=backend_cfg.get("credential_env", "ALPHALOOM_API_KEY"),
                timeout=backend_cfg.get("timeout", 60.0),
                max_retries=backend_cfg.get("max_retries", 2),
                temperature=backend_cfg.get("temperature", 0.0),
            )
        )
    raise AlphaloomError(f"unknown backend kind {kind!r}")


def _settings_from_config(config: dict) -> LoopSettings:
    loops = config.get("loops", {})
    return LoopSettings(
        objective=Objective.from_record(config.get("objective", "ir")),
        t_early=loops.get("t_early", 3),
        outer_rounds=loops.get("outer_rounds", 5),
        candidates_per_round=loops.get("candidates_per_round", 5),
        feedback_buffer=loops.get("feedback_buffer", 5),
        max_trials=loops.get("max_trials", 20),
        regeneration_budget=loops.get("regeneration_budget", 3),
        max_retries=loops.get("max_retries", 3),
        score_mode=config.get("score_mode", "combined"),
        label_horizon=config.get("label_horizon", 1),
    )


def run_pipeline(config: dict, resume: bool = False, seed: int | None = None, backend=None):
    """Full outer-loop pipeline plus gated final evaluation.

    ``backend`` overrides the configured completion backend (used to
    record fixture tables for scripted replays).
    """
    if seed is not None:
        config = {**config, "seed": seed}
    panel = ingest_csv(config["data"]["csv"])
    panel = filter_universe(panel, config["data"].get("min_days", 100))
    splits = SplitSpec.from_record(config["splits"])
    splits.validate_against(panel)
    strategy = StrategyConfig.from_record(config.get("strategy", {})) if config.get(
        "strategy"
    ) else StrategyConfig()
    settings = _settings_from_config(config)
    if backend is None:
        backend = _build_run_backend(config["backend"])
    store = RunStore(config["output_dir"])
    engine = PipelineEngine(panel, splits, strategy, settings)

    if resume:
        state = store.load_state()
    else:
        library = [logic for logic, _, _ in load_library(config["initial_library"])]
        state = start_outer_state(library, backend, settings)
        snapshot = {k: v for k, v in config.items() if k != "schema_version"}
        store.write_config(snapshot)
        store.write_state(state)

    state = outer_loop(state, engine, backend, settings, store)
    report = None
    if config.get("final_evaluation", True):
        report = final_evaluation(state, engine, settings, final_run=True, store=store)
    return state, report


def cmd_run(args) -> int:
    config = load_run_config(args.config)
    state, report = run_pipeline(config, resume=args.resume, seed=args.seed)
    best = state.h_best or {}
    print(f"run complete: {state.t} outer round(s), best logic {best.get('id', '-')}")
    if state.best_expression:
        print(f"best expression: {state.best_expression}")
    if report is not None:
        print(format_report_table([report]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphaloom",
        description="Market-logic-driven alpha factor mining and backtesting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a raw OHLCV CSV and write the filtered panel")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-days", type=int, default=100)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("eval", help="evaluate an expression and print one cross-section")
    p.add_argument("--expr", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--date", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("backtest", help="single-factor backtest report on one split")
    p.add_argument("--expr", required=True)
    p.add_argument("--panel", required=True)
    _add_split_flags(p)
    p.add_argument("--split", choices=("train", "validation", "test"), default="validation")
    p.add_argument("--final", action="store_true", help="required for the test split")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--min-days", type=int, default=1)
    _add_strategy_flags(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--series", action="store_true", help="include per-date series in --json")
    p.set_defaults(fn=cmd_backtest)

    p = sub.add_parser("compile", help="canonicalize a structured logic and print its constraints")
    p.add_argument("--logic", required=True)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("mine", help="run the formula-to-logic chain over a factor file")
    p.add_argument("--factors", required=True, help="file with one expression per line")
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("scripted", "http"), default="scripted")
    p.add_argument("--fixtures", help="fixture table for the scripted backend")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--credential-env", default="ALPHALOOM_API_KEY")
    p.set_defaults(fn=cmd_mine)

    p = sub.add_parser("run", help="full pipeline from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AlphaloomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
