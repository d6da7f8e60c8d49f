"""Cost-aware top-k/dropout backtesting and the metric bundle.

Metrics per split: mean daily Spearman IC, ICIR, annualized excess
return, information ratio and maximum drawdown, plus the per-date
series behind them.  The portfolio holds the ``top_k`` best-scored
instruments equal-weighted, replaces the ``n_drop`` weakest holdings
each day, pays proportional costs on traded notional (applied as
multiplicative factors, so a full-notional round trip costs exactly
(1 - buy_cost) * (1 - sell_cost)) and is measured against the
equal-weight universe.

Labels are kept split-contained: a date only enters a split's
evaluation when its full forward-return window stays inside that split,
so optimization-phase outputs cannot depend on any test-interval cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlphaloomError, LeakageError, SplitError
from .panel import Panel, ReturnPanel, SplitSpec, cross_sectional_zscore
from .records import stamp


@dataclass(frozen=True)
class StrategyConfig:
    top_k: int = 50
    n_drop: int = 5
    buy_cost: float = 0.0005
    sell_cost: float = 0.0015
    annualization: int = 252
    benchmark: str = "equal-weight-universe"

    def __post_init__(self):
        if self.top_k < 1:
            raise AlphaloomError("top_k must be >= 1")
        if not 0 <= self.n_drop <= self.top_k:
            raise AlphaloomError("n_drop must lie in [0, top_k]")
        for name in ("buy_cost", "sell_cost"):
            cost = getattr(self, name)
            if not 0.0 <= cost <= 0.1:
                raise AlphaloomError(f"{name} must lie in [0, 0.1]")
        if self.annualization < 1:
            raise AlphaloomError("annualization must be >= 1")

    def to_record(self) -> dict:
        return {
            "top_k": self.top_k,
            "n_drop": self.n_drop,
            "buy_cost": self.buy_cost,
            "sell_cost": self.sell_cost,
            "annualization": self.annualization,
            "benchmark": self.benchmark,
        }

    @staticmethod
    def from_record(record: dict) -> "StrategyConfig":
        return StrategyConfig(**record)


@dataclass(frozen=True)
class BacktestReport:
    split: str
    ic: float | None
    icir: float | None
    ar: float | None
    ir: float | None
    mdd: float | None
    icir_degenerate: bool = False
    ir_degenerate: bool = False
    flags: tuple[str, ...] = ()
    ic_series: tuple = ()
    equity_curve: tuple = ()
    turnover_series: tuple = ()
    excess_returns: tuple = ()

    def to_record(self, include_series: bool = True) -> dict:
        record = stamp(
            {
                "split": self.split,
                "ic": self.ic,
                "icir": self.icir,
                "ar": self.ar,
                "ir": self.ir,
                "mdd": self.mdd,
                "icir_degenerate": self.icir_degenerate,
                "ir_degenerate": self.ir_degenerate,
                "flags": list(self.flags),
            }
        )
        if include_series:
            record["ic_series"] = [None if np.isnan(v) else v for v in self.ic_series]
            record["equity_curve"] = list(self.equity_curve)
            record["turnover_series"] = list(self.turnover_series)
            record["excess_returns"] = list(self.excess_returns)
        return record

    def metrics(self) -> dict:
        return {"IC": self.ic, "ICIR": self.icir, "AR": self.ar, "IR": self.ir, "MDD": self.mdd}


def _avg_ranks(values: np.ndarray) -> np.ndarray:
    """1-based average ranks with ties shared; input has no NaN."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    k = 0
    while k < values.size:
        k2 = k
        while k2 + 1 < values.size and values[order[k2 + 1]] == values[order[k]]:
            k2 += 1
        ranks[order[k : k2 + 1]] = 0.5 * (k + k2) + 1.0
        k = k2 + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation of two aligned 1-d samples (no NaN).

    Ties get average ranks; a constant side yields NaN.
    """
    rx = _avg_ranks(x)
    ry = _avg_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = (dx * dx).mean()
    vy = (dy * dy).mean()
    if vx == 0.0 or vy == 0.0:
        return float("nan")
    return float((dx * dy).mean() / np.sqrt(vx * vy))


def daily_ic(scores: np.ndarray, returns: ReturnPanel | np.ndarray, date_indices) -> np.ndarray:
    """Per-date Spearman IC between the score and forward-return
    cross-sections; dates with fewer than two common instruments are
    missing."""
    values = returns.values if isinstance(returns, ReturnPanel) else returns
    date_indices = np.asarray(date_indices, dtype=int)
    out = np.full(date_indices.size, np.nan)
    for k, t in enumerate(date_indices):
        xs = scores[t]
        ys = values[t]
        common = ~np.isnan(xs) & ~np.isnan(ys)
        if common.sum() < 2:
            continue
        out[k] = spearman(xs[common], ys[common])
    return out


def summarize_ic(ic_series: np.ndarray) -> tuple[float | None, float | None, bool]:
    """(mean IC, ICIR, degenerate flag); ICIR uses the population std."""
    values = np.asarray(ic_series, dtype=float)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return None, None, False
    ic = float(values.mean())
    if values.size < 2:
        return ic, None, False
    std = float(values.std())
    # a constant series has zero variance regardless of FP dust in std()
    if std == 0.0 or np.all(values == values[0]):
        return ic, 0.0, True
    return ic, ic / std, False


def ar_ir_mdd(
    excess_returns, equity_curve, config: StrategyConfig
) -> tuple[float, float, float, bool]:
    """Annualized excess return, information ratio, max drawdown.

    ar  = mean(excess) * annualization
    ir  = ar / (std(excess) * sqrt(annualization)), population std
    mdd = -max peak-to-trough fractional loss of the equity curve
    """
    excess = np.asarray(excess_returns, dtype=float)
    if excess.size == 0:
        raise AlphaloomError("cannot annualize an empty series")
    ar = float(excess.mean() * config.annualization)
    std = float(excess.std())
    if std == 0.0 or np.all(excess == excess[0]):
        ir, degenerate = 0.0, True
    else:
        ir, degenerate = ar / (std * np.sqrt(config.annualization)), False
    equity = np.asarray(equity_curve, dtype=float)
    peak = np.maximum.accumulate(equity)
    drawdown = (peak - equity) / peak
    mdd = -float(drawdown.max()) if drawdown.size else 0.0
    return ar, ir, mdd, degenerate


def evaluation_indices(panel: Panel, splits: SplitSpec, which: str, horizon: int) -> np.ndarray:
    """Split dates whose forward window stays inside the split.

    The tail ``horizon`` dates of each split are excluded so a split's
    labels never read the neighbouring interval (the no-leakage rule).
    """
    idx = splits.indices(panel, which)
    kept = idx[idx + horizon <= idx[-1]]
    if kept.size == 0:
        raise SplitError(f"{which} split too short for horizon {horizon}")
    return kept


def simulate_topk(
    scores: np.ndarray,
    panel: Panel,
    returns: ReturnPanel | np.ndarray,
    config: StrategyConfig,
    date_indices,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[str, ...]]:
    """Run the daily top-k/dropout rotation over the given dates.

    Returns (equity_curve, excess_return_series, turnover_series, flags).
    The equity curve carries a leading 1.0.  Holdings with a missing
    realized return contribute 0 that day and are force-dropped at the
    next rebalance; a weak holding is only dropped when a replacement
    candidate exists, so the book never shrinks avoidably.
    """
    values = returns.values if isinstance(returns, ReturnPanel) else returns
    date_indices = np.asarray(date_indices, dtype=int)
    names = panel.instruments
    flags: set[str] = set()

    held: list[int] = []
    forced: set[int] = set()
    equity = [1.0]
    excess = np.zeros(date_indices.size)
    turnover = np.zeros(date_indices.size)

    for k, t in enumerate(date_indices):
        row = scores[t]

        def score_of(col: int) -> float:
            v = row[col]
            return -np.inf if np.isnan(v) else float(v)

        candidates = [j for j in range(len(names)) if not np.isnan(row[j]) and j not in held]
        candidates.sort(key=lambda j: (-row[j], names[j]))

        if k == 0:
            buys = candidates[: config.top_k]
            if len(buys) < config.top_k:
                flags.add("short_universe")
            held = list(buys)
            sell_frac = 0.0
            buy_frac = 1.0 if held else 0.0
        else:
            sells = [j for j in held if j in forced]
            droppable = sorted(
                (j for j in held if j not in forced),
                key=lambda j: (score_of(j), names[j]),
            )
            n_extra = min(config.n_drop, len(candidates))
            sells.extend(droppable[:n_extra])
            remaining = [j for j in held if j not in set(sells)]
            n_buy = min(config.top_k - len(remaining), len(candidates))
            buys = candidates[: max(n_buy, 0)]
            prev_count = len(held)
            held = remaining + buys
            sell_frac = len(sells) / prev_count if prev_count else 0.0
            buy_frac = len(buys) / len(held) if held else 0.0
        turnover[k] = sell_frac + buy_frac

        day_returns = values[t, held] if held else np.array([])
        missing = np.isnan(day_returns)
        forced = {held[i] for i in np.flatnonzero(missing)}
        r_port = float(np.where(missing, 0.0, day_returns).mean()) if held else 0.0

        cost_mult = (1.0 - sell_frac * config.sell_cost) * (1.0 - buy_frac * config.buy_cost)
        r_net = (1.0 + r_port) * cost_mult - 1.0

        universe_returns = values[t]
        available = universe_returns[~np.isnan(universe_returns)]
        r_bench = float(available.mean()) if available.size else 0.0

        excess[k] = r_net - r_bench
        equity.append(equity[-1] * (1.0 + r_net))

    return np.asarray(equity), excess, turnover, tuple(sorted(flags))


def build_report(
    split: str,
    scores: np.ndarray,
    panel: Panel,
    returns: ReturnPanel,
    splits: SplitSpec,
    config: StrategyConfig,
) -> BacktestReport:
    idx = evaluation_indices(panel, splits, split, returns.horizon)
    ic_series = daily_ic(scores, returns, idx)
    ic, icir, icir_degenerate = summarize_ic(ic_series)
    equity, excess, turnover, flags = simulate_topk(scores, panel, returns, config, idx)
    ar, ir, mdd, ir_degenerate = ar_ir_mdd(excess, equity, config)
    return BacktestReport(
        split=split,
        ic=ic,
        icir=icir,
        ar=ar,
        ir=ir,
        mdd=mdd,
        icir_degenerate=icir_degenerate,
        ir_degenerate=ir_degenerate,
        flags=flags,
        ic_series=tuple(ic_series),
        equity_curve=tuple(equity),
        turnover_series=tuple(turnover),
        excess_returns=tuple(excess),
    )


def run_backtest(
    scores: np.ndarray,
    panel: Panel,
    returns: ReturnPanel,
    splits: SplitSpec,
    config: StrategyConfig,
) -> tuple[BacktestReport, BacktestReport]:
    """Train and validation reports; the test split is reachable only
    through :func:`run_test_backtest` with the final-run flag."""
    r_train = build_report("train", scores, panel, returns, splits, config)
    r_val = build_report("validation", scores, panel, returns, splits, config)
    return r_train, r_val


def run_test_backtest(
    scores: np.ndarray,
    panel: Panel,
    returns: ReturnPanel,
    splits: SplitSpec,
    config: StrategyConfig,
    final_run: bool = False,
) -> BacktestReport:
    if not final_run:
        raise LeakageError(
            "test-split backtest requires the explicit final-run flag; "
            "optimization must read validation metrics only"
        )
    return build_report("test", scores, panel, returns, splits, config)


def scores_from_expression(expr, panel: Panel) -> np.ndarray:
    """Evaluate a factor and z-score it per date (the raw-factor score path)."""
    from .dsl import evaluate, parse

    factor = parse(expr) if isinstance(expr, str) else expr
    return cross_sectional_zscore(evaluate(factor, panel))


def format_report_table(reports: list[BacktestReport]) -> str:
    """Fixed-width IC/ICIR/AR/IR/MDD table, one row per report."""
    header = f"{'split':<12}{'IC':>10}{'ICIR':>10}{'AR':>10}{'IR':>10}{'MDD':>10}"
    lines = [header, "-" * len(header)]
    for report in reports:
        def cell(v, pct=False):
            if v is None:
                return f"{'--':>10}"
            return f"{v * 100:>9.2f}%" if pct else f"{v:>10.4f}"

        lines.append(
            f"{report.split:<12}"
            + cell(report.ic)
            + cell(report.icir)
            + cell(report.ar, pct=True)
            + cell(report.ir)
            + cell(report.mdd, pct=True)
        )
    return "\n".join(lines)
