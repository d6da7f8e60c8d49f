"""Inner and outer optimization loops, evidence bookkeeping, run persistence.

The inner loop fixes one market logic, compiles it to constraints and
searches factor expressions under those constraints with early stopping
on the validation objective.  The outer loop generates and refines the
logics themselves, growing the logic library as it goes.  All
optimization decisions read validation metrics only; the test split is
reachable solely through :func:`final_evaluation` with its explicit
final-run flag.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents.calls import (
    constraint_struct,
    factor_feedback,
    generate_factors,
    generate_logic,
    refinement_direction,
)
from .backtest import (
    BacktestReport,
    StrategyConfig,
    daily_ic,
    evaluation_indices,
    run_backtest,
    run_test_backtest,
)
from .dsl import FactorExpr, evaluate, negated, parse, unparse
from .errors import (
    AgentCallError,
    AlphaloomError,
    CanonicalizationError,
    CompileError,
    CorruptRecordError,
    FitError,
    LeakageError,
    RegenerationBudgetError,
    RunStateError,
)
from .logic import ConstraintSet, MarketLogic, MarketLogicStruct, make_logic_id
from .panel import Panel, SplitSpec, cross_sectional_zscore, forward_returns
from .records import dumps_canonical, loads_record, stamp
from .scoring import base_factors, fit, predict

METRIC_KEYS = ("ic", "icir", "ar", "ir", "mdd")


@dataclass(frozen=True)
class Objective:
    """Scalar selection objective over validation metrics; higher is better.

    The stored max drawdown is a negative fraction, so it is already
    oriented higher-is-better and enters weighted combinations as-is.
    """

    kind: str = "ir"
    weights: dict[str, float] | None = None

    def __post_init__(self):
        if self.kind not in METRIC_KEYS + ("weighted",):
            raise AlphaloomError(f"unknown objective {self.kind!r}")
        if self.kind == "weighted" and not self.weights:
            raise AlphaloomError("weighted objective needs weights")

    def value(self, report: BacktestReport | None) -> float:
        if report is None:
            return float("-inf")
        if self.kind == "weighted":
            total = 0.0
            for name, weight in self.weights.items():
                metric = getattr(report, name)
                if metric is None:
                    return float("-inf")
                total += weight * metric
            return total
        metric = getattr(report, self.kind)
        return float("-inf") if metric is None else float(metric)

    def to_record(self) -> dict:
        return {"kind": self.kind, "weights": self.weights}

    @staticmethod
    def from_record(record) -> "Objective":
        if isinstance(record, str):
            return Objective(kind=record)
        return Objective(kind=record["kind"], weights=record.get("weights"))


@dataclass(frozen=True)
class LoopSettings:
    objective: Objective = field(default_factory=Objective)
    t_early: int = 3
    outer_rounds: int = 5
    candidates_per_round: int = 5
    feedback_buffer: int = 5
    max_trials: int = 20
    regeneration_budget: int = 3
    max_retries: int = 3
    score_mode: str = "combined"  # or "raw"
    ridge_lambda: float = 1e-6
    label_horizon: int = 1  # fallback when a logic omits its horizon

    def __post_init__(self):
        if self.t_early < 1:
            raise AlphaloomError("t_early must be >= 1")
        if self.outer_rounds < 1:
            raise AlphaloomError("outer_rounds must be >= 1")
        if self.score_mode not in ("combined", "raw"):
            raise AlphaloomError("score_mode must be 'combined' or 'raw'")


@dataclass(frozen=True)
class CandidateResult:
    r_train: BacktestReport
    r_val: BacktestReport
    raw_val_ic: float | None


class PipelineEngine:
    """Backtests one candidate expression end to end.

    combined mode scores base factors plus the candidate through the
    ridge combiner fitted on train dates; raw mode scores the z-scored
    candidate alone.  Per-horizon labels and evaluation dates are cached.
    """

    def __init__(
        self,
        panel: Panel,
        splits: SplitSpec,
        strategy: StrategyConfig,
        settings: LoopSettings,
    ):
        splits.validate_against(panel)
        self.panel = panel
        self.splits = splits
        self.strategy = strategy
        self.settings = settings
        self.base = base_factors(panel)
        self._horizon_cache: dict[int, dict] = {}

    def _artifacts(self, horizon: int) -> dict:
        cached = self._horizon_cache.get(horizon)
        if cached is None:
            returns = forward_returns(self.panel, horizon)
            cached = {
                "returns": returns,
                "labels": cross_sectional_zscore(returns.values),
                "train_idx": evaluation_indices(self.panel, self.splits, "train", horizon),
                "val_idx": evaluation_indices(self.panel, self.splits, "validation", horizon),
            }
            self._horizon_cache[horizon] = cached
        return cached

    def _scores(self, expr: FactorExpr, art: dict, fit_idx: np.ndarray) -> np.ndarray:
        factor = evaluate(expr, self.panel)
        if self.settings.score_mode == "raw":
            return cross_sectional_zscore(factor)
        features = self.base.with_feature("candidate", factor)
        model = fit(features, art["labels"], fit_idx, self.settings.ridge_lambda)
        return predict(model, features)

    def evaluate_candidate(self, expr: FactorExpr, horizon: int) -> CandidateResult:
        art = self._artifacts(horizon)
        scores = self._scores(expr, art, art["train_idx"])
        r_train, r_val = run_backtest(
            scores, self.panel, art["returns"], self.splits, self.strategy
        )
        raw_scores = cross_sectional_zscore(evaluate(expr, self.panel))
        raw_series = daily_ic(raw_scores, art["returns"], art["val_idx"])
        raw_series = raw_series[~np.isnan(raw_series)]
        raw_val_ic = float(raw_series.mean()) if raw_series.size else None
        return CandidateResult(r_train=r_train, r_val=r_val, raw_val_ic=raw_val_ic)

    def final_test(self, expr: FactorExpr, horizon: int, final_run: bool) -> BacktestReport:
        """Refit on train+validation, then the one gated test backtest."""
        art = self._artifacts(horizon)
        idx = self.splits.indices(self.panel, "train")
        val_idx = self.splits.indices(self.panel, "validation")
        last_val = val_idx[-1]
        pooled = np.concatenate([idx, val_idx])
        pooled = pooled[pooled + horizon <= last_val]
        scores = self._scores(expr, art, pooled)
        return run_test_backtest(
            scores, self.panel, art["returns"], self.splits, self.strategy, final_run=final_run
        )


@dataclass(frozen=True)
class CandidateRecord:
    expression: str
    flipped: bool
    round_no: int
    j_value: float
    raw_val_ic: float | None
    r_train: BacktestReport
    r_val: BacktestReport

    def to_record(self) -> dict:
        row = {
            "expression": self.expression,
            "flipped": self.flipped,
            "round": self.round_no,
            "j": None if self.j_value == float("-inf") else self.j_value,
            "raw_val_ic": self.raw_val_ic,
        }
        row.update({k: getattr(self.r_val, k) for k in METRIC_KEYS})
        return row


@dataclass(frozen=True)
class EvidenceSummary:
    """Per-logic evidence handed to the outer loop.

    carries the structured logic, the best validation report, and the
    full candidate metric table.
    """

    logic_id: str
    status: str  # "ok" | "empty" | "invalid_logic"
    h_struct: MarketLogicStruct | None
    best: CandidateRecord | None
    table: tuple[CandidateRecord, ...]
    rounds: int
    notes: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "logic_id": self.logic_id,
            "status": self.status,
            "rounds": self.rounds,
            "H_struct": self.h_struct.to_record() if self.h_struct else None,
            "best": self.best.to_record() if self.best else None,
            "best_validation": (
                self.best.r_val.to_record(include_series=False) if self.best else None
            ),
            "candidates": [row.to_record() for row in self.table],
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class InnerLoopResult:
    evidence: EvidenceSummary
    r_val_best: BacktestReport | None
    rounds: int
    feedback_requests: int


def _candidate_sort_key(record: CandidateRecord):
    icir = record.r_val.icir
    return (record.j_value, float("-inf") if icir is None else icir, -record.round_no)


def inner_loop(
    logic: MarketLogic,
    engine: PipelineEngine,
    backend,
    settings: LoopSettings,
) -> InnerLoopResult:
    """Factor search under one fixed logic with early stopping.

    Control flow: canonicalize and compile once; each round generates up
    to ``candidates_per_round`` conformant expressions, backtests them,
    and tracks the best round objective.  A strict improvement resets
    the stall counter, anything else increments it; the loop ends when
    the counter reaches ``t_early`` or the per-logic trial budget is
    spent.  Feedback is requested only while the counter is below
    ``t_early``.
    """
    objective = settings.objective
    try:
        h_struct, gamma = constraint_struct(logic, backend, settings.max_retries)
    except (AgentCallError, CanonicalizationError, CompileError) as exc:
        evidence = EvidenceSummary(
            logic_id=logic.id,
            status="invalid_logic",
            h_struct=None,
            best=None,
            table=(),
            rounds=0,
            notes=(f"logic rejected: {exc}",),
        )
        return InnerLoopResult(evidence, None, 0, 0)

    horizon = h_struct.b.h or settings.label_horizon
    stall = 0
    best: CandidateRecord | None = None
    feedback = None
    feedback_requests = 0
    buffer: collections.deque[CandidateRecord] = collections.deque(
        maxlen=settings.feedback_buffer
    )
    table: list[CandidateRecord] = []
    notes: list[str] = []
    rounds = 0
    trials = 0

    while stall < settings.t_early:
        if trials >= settings.max_trials:
            notes.append(f"trial budget {settings.max_trials} exhausted")
            break
        rounds += 1
        budget = min(settings.candidates_per_round, settings.max_trials - trials)
        round_candidates: list[CandidateRecord] = []
        try:
            generated = generate_factors(
                gamma,
                feedback,
                budget,
                backend,
                settings.regeneration_budget,
                settings.max_retries,
            )
        except (AgentCallError, RegenerationBudgetError) as exc:
            notes.append(f"round {rounds}: generation failed: {exc}")
            generated = None
        if generated is not None:
            if generated.regenerations:
                notes.append(
                    f"round {rounds}: {generated.regenerations} regeneration(s), "
                    f"{len(generated.rejected)} rejection(s)"
                )
            for expr in generated.expressions:
                trials += 1
                record = _evaluate_candidate(
                    expr, gamma, horizon, engine, objective, rounds, notes
                )
                if record is None:
                    continue
                round_candidates.append(record)
                buffer.append(record)
                table.append(record)

        if round_candidates:
            round_best = max(round_candidates, key=_candidate_sort_key)
            if best is None or round_best.j_value > best.j_value:
                best = round_best
                stall = 0
            else:
                stall += 1
        else:
            stall += 1

        if stall < settings.t_early and buffer:
            feedback_requests += 1
            feedback = factor_feedback(
                h_struct,
                [row.to_record() for row in buffer],
                backend,
                settings.max_retries,
            )

    evidence = EvidenceSummary(
        logic_id=logic.id,
        status="ok" if table else "empty",
        h_struct=h_struct,
        best=best,
        table=tuple(table),
        rounds=rounds,
        notes=tuple(notes),
    )
    return InnerLoopResult(evidence, best.r_val if best else None, rounds, feedback_requests)


def _evaluate_candidate(
    expr: FactorExpr,
    gamma: ConstraintSet,
    horizon: int,
    engine: PipelineEngine,
    objective: Objective,
    round_no: int,
    notes: list[str],
) -> CandidateRecord | None:
    try:
        result = engine.evaluate_candidate(expr, horizon)
        flipped = False
        if result.raw_val_ic is not None and gamma.direction.d * result.raw_val_ic < 0:
            # direction preference: align the factor sign, re-backtest
            expr = negated(expr)
            flipped = True
            result = engine.evaluate_candidate(expr, horizon)
    except (FitError, AlphaloomError) as exc:
        notes.append(f"round {round_no}: candidate {unparse(expr)!r} failed: {exc}")
        return None
    return CandidateRecord(
        expression=unparse(expr),
        flipped=flipped,
        round_no=round_no,
        j_value=objective.value(result.r_val),
        raw_val_ic=result.raw_val_ic,
        r_train=result.r_train,
        r_val=result.r_val,
    )


# --- Outer loop state and persistence ---------------------------------------


@dataclass
class OuterState:
    """JSON-ready snapshot of the outer loop, written at round boundaries."""

    library: list[dict]
    h_hist: list[dict]
    e_hist: list[dict]
    fb_hist: list[dict | None]
    h_current: dict | None
    h_best: dict | None
    j_best: float | None
    best_expression: str | None
    best_horizon: int | None
    e_best: dict | None
    t: int
    completed: bool
    final_report: dict | None = None

    def to_record(self) -> dict:
        return stamp(
            {
                "library": self.library,
                "h_hist": self.h_hist,
                "e_hist": self.e_hist,
                "fb_hist": self.fb_hist,
                "h_current": self.h_current,
                "h_best": self.h_best,
                "j_best": self.j_best,
                "best_expression": self.best_expression,
                "best_horizon": self.best_horizon,
                "e_best": self.e_best,
                "t": self.t,
                "completed": self.completed,
                "final_report": self.final_report,
            }
        )

    @staticmethod
    def from_record(record: dict) -> "OuterState":
        try:
            return OuterState(
                library=record["library"],
                h_hist=record["h_hist"],
                e_hist=record["e_hist"],
                fb_hist=record["fb_hist"],
                h_current=record["h_current"],
                h_best=record["h_best"],
                j_best=record["j_best"],
                best_expression=record["best_expression"],
                best_horizon=record["best_horizon"],
                e_best=record["e_best"],
                t=record["t"],
                completed=record["completed"],
                final_report=record.get("final_report"),
            )
        except KeyError as exc:
            raise CorruptRecordError(f"run state missing field {exc}") from exc


class RunStore:
    """Run directory: config snapshot, library file, round records, state."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "rounds").mkdir(exist_ok=True)

    def write_config(self, config: dict) -> None:
        (self.root / "config.json").write_text(
            dumps_canonical(stamp(config)), encoding="utf-8"
        )

    def write_state(self, state: OuterState) -> None:
        (self.root / "state.json").write_text(
            dumps_canonical(state.to_record()), encoding="utf-8"
        )
        lines = [dumps_canonical(entry) for entry in state.library]
        (self.root / "library.jsonl").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )

    def write_round(self, round_no: int, record: dict) -> None:
        path = self.root / "rounds" / f"round_{round_no:03d}.json"
        path.write_text(dumps_canonical(stamp(record)), encoding="utf-8")

    def write_final(self, report: dict) -> None:
        (self.root / "final_report.json").write_text(
            dumps_canonical(stamp(report)), encoding="utf-8"
        )

    def load_state(self) -> OuterState:
        path = self.root / "state.json"
        if not path.exists():
            raise RunStateError(f"no run state at {path}")
        return OuterState.from_record(loads_record(path.read_text(encoding="utf-8")))


def _wrap_generated(trio: dict, round_no: int) -> MarketLogic:
    provenance = "generated" if round_no == 1 else "refined"
    prefix = "gen" if round_no == 1 else f"ref{round_no - 1}"
    return MarketLogic(
        id=make_logic_id(prefix, str(round_no), trio["logic_text"], trio["c_text"]),
        provenance=provenance,
        logic_text=trio["logic_text"],
        c_text=trio["c_text"],
        b_text=trio["b_text"],
    )


def start_outer_state(initial_library: list[MarketLogic], backend, settings: LoopSettings) -> OuterState:
    """Seed the outer loop: generate the first working logic from the library."""
    if not initial_library:
        raise AlphaloomError("outer loop requires a non-empty initial logic library")
    library = [logic.to_record() for logic in initial_library]
    trio = generate_logic(
        [logic.logic_text for logic in initial_library],
        None,
        [],
        [],
        [],
        1,
        backend,
        settings.max_retries,
    )
    h_current = _wrap_generated(trio, 1)
    library.append(h_current.to_record())
    return OuterState(
        library=library,
        h_hist=[h_current.to_record()],
        e_hist=[],
        fb_hist=[],
        h_current=h_current.to_record(),
        h_best=h_current.to_record(),
        j_best=None,
        best_expression=None,
        best_horizon=None,
        e_best=None,
        t=0,
        completed=False,
    )


def outer_loop(
    state: OuterState,
    engine: PipelineEngine,
    backend,
    settings: LoopSettings,
    store: RunStore | None = None,
) -> OuterState:
    """Advance the outer loop to ``outer_rounds`` completed rounds.

    Per round: run the inner loop under the current logic, append its
    evidence, fetch a refinement direction, update the best logic by the
    objective, generate the next logic conditioned on the full history,
    and append it to both the history and the library.
    """
    objective = settings.objective
    while state.t < settings.outer_rounds:
        round_no = state.t + 1
        current = MarketLogic.from_record(state.h_current)
        inner = inner_loop(current, engine, backend, settings)
        evidence_record = inner.evidence.to_record()
        state.e_hist.append(evidence_record)

        fb = refinement_direction(
            current.logic_text,
            [record["logic_text"] for record in state.h_hist],
            state.e_hist,
            state.fb_hist,
            backend,
            settings.max_retries,
        )
        state.fb_hist.append(fb)

        j_value = objective.value(inner.r_val_best)
        if inner.r_val_best is not None and (
            state.j_best is None or j_value > state.j_best
        ):
            state.h_best = current.to_record()
            state.j_best = j_value
            state.e_best = inner.r_val_best.to_record(include_series=False)
            state.best_expression = inner.evidence.best.expression
            state.best_horizon = (
                inner.evidence.h_struct.b.h if inner.evidence.h_struct else settings.label_horizon
            )

        new_logic_record = None
        try:
            trio = generate_logic(
                [record["logic_text"] for record in state.library],
                current.logic_text,
                [record["logic_text"] for record in state.h_hist],
                state.e_hist,
                state.fb_hist,
                round_no + 1,
                backend,
                settings.max_retries,
            )
            new_logic = _wrap_generated(trio, round_no + 1)
            new_logic_record = new_logic.to_record()
            state.h_hist.append(new_logic_record)
            state.library.append(new_logic_record)
            state.h_current = new_logic_record
        except AgentCallError as exc:
            # round is consumed; the current logic carries into the next one
            evidence_record["notes"] = evidence_record.get("notes", []) + [
                f"logic generation failed: {exc}"
            ]

        state.t = round_no
        if store is not None:
            store.write_round(
                round_no,
                {
                    "round": round_no,
                    "logic": current.to_record(),
                    "evidence": evidence_record,
                    "feedback": fb,
                    "new_logic": new_logic_record,
                },
            )
            store.write_state(state)

    state.completed = True
    if store is not None:
        store.write_state(state)
    return state


def final_evaluation(
    state: OuterState,
    engine: PipelineEngine,
    settings: LoopSettings,
    final_run: bool = False,
    store: RunStore | None = None,
) -> BacktestReport:
    """The single gated test backtest of the winning expression.

    Requires the outer loop to be complete and the explicit final-run
    flag; the score model is refitted on train plus validation.  A
    second invocation returns the cached report.
    """
    if not final_run:
        raise LeakageError("final evaluation requires final_run=True")
    if not state.completed:
        raise LeakageError("final evaluation before the outer loop completed")
    if state.best_expression is None:
        raise AlphaloomError("no evaluated logic produced a usable expression")
    if state.final_report is not None:
        return _report_from_record(state.final_report)
    horizon = state.best_horizon or settings.label_horizon
    report = engine.final_test(parse(state.best_expression), horizon, final_run=final_run)
    state.final_report = report.to_record(include_series=True)
    if store is not None:
        store.write_final(state.final_report)
        store.write_state(state)
    return report


def _report_from_record(record: dict) -> BacktestReport:
    return BacktestReport(
        split=record["split"],
        ic=record["ic"],
        icir=record["icir"],
        ar=record["ar"],
        ir=record["ir"],
        mdd=record["mdd"],
        icir_degenerate=record["icir_degenerate"],
        ir_degenerate=record["ir_degenerate"],
        flags=tuple(record.get("flags", ())),
        ic_series=tuple(
            np.nan if v is None else v for v in record.get("ic_series", ())
        ),
        equity_curve=tuple(record.get("equity_curve", ())),
        turnover_series=tuple(record.get("turnover_series", ())),
        excess_returns=tuple(record.get("excess_returns", ())),
    )
