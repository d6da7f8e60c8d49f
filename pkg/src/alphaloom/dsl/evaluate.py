"""Expression evaluation over a panel.

Produces one float64 (dates x instruments) matrix per expression.
Numeric trouble never aborts an evaluation: division by zero, logs of
non-positive values, square roots of negatives and overflow all yield
missing cells.  Rolling operators follow the full-window convention of
the kernels; cross-sectional operators act per date over the
non-missing entries of that row.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..panel import Panel, cross_sectional_zscore
from .ast import Call, Const, FactorExpr, Node, Var
from .catalogue import CATALOGUE, DATA_SLOTS


def _clean(out: np.ndarray) -> np.ndarray:
    out[~np.isfinite(out)] = np.nan
    return out


def _delay(a: np.ndarray, n: int) -> np.ndarray:
    out = np.full(a.shape, np.nan)
    if n < a.shape[0]:
        out[n:] = a[: a.shape[0] - n]
    return out


def _cs_rank(a: np.ndarray) -> np.ndarray:
    """Per-date fractional rank in [0, 1]: (rank-1)/(m-1) with average
    ranks on ties; a single-entry date ranks 0.5."""
    out = np.full(a.shape, np.nan)
    for i in range(a.shape[0]):
        row = a[i]
        valid = np.flatnonzero(~np.isnan(row))
        m = valid.size
        if m == 0:
            continue
        if m == 1:
            out[i, valid[0]] = 0.5
            continue
        values = row[valid]
        order = np.argsort(values, kind="stable")
        ranks = np.empty(m)
        k = 0
        while k < m:
            k2 = k
            while k2 + 1 < m and values[order[k2 + 1]] == values[order[k]]:
                k2 += 1
            ranks[order[k : k2 + 1]] = 0.5 * (k + k2) + 1.0  # average 1-based rank
            k = k2 + 1
        out[i, valid] = (ranks - 1.0) / (m - 1.0)
    return out


def _cs_moments(a: np.ndarray):
    valid = ~np.isnan(a)
    m = valid.sum(axis=1)
    safe = np.maximum(m, 1)
    mean = np.where(valid, a, 0.0).sum(axis=1) / safe
    dev = np.where(valid, a - mean[:, None], 0.0)
    var = (dev * dev).sum(axis=1) / safe
    return valid, m, mean, dev, var


def _broadcast_rows(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = np.where(valid, values[:, None], np.nan)
    return _clean(out)


def _cs_mean(a):
    valid, m, mean, _, _ = _cs_moments(a)
    mean = np.where(m >= 1, mean, np.nan)
    return _broadcast_rows(mean, valid)


def _cs_std(a):
    valid, m, _, _, var = _cs_moments(a)
    std = np.where(m >= 1, np.sqrt(var), np.nan)
    return _broadcast_rows(std, valid)


def _cs_skew(a):
    valid, m, _, dev, var = _cs_moments(a)
    safe = np.maximum(m, 1)
    m3 = (dev**3).sum(axis=1) / safe
    with np.errstate(all="ignore"):
        skew = m3 / var**1.5
    skew[(m < 2) | (var == 0.0)] = np.nan
    return _broadcast_rows(skew, valid)


def _cs_kurt(a):
    # population excess kurtosis
    valid, m, _, dev, var = _cs_moments(a)
    safe = np.maximum(m, 1)
    m4 = (dev**4).sum(axis=1) / safe
    with np.errstate(all="ignore"):
        kurt = m4 / var**2 - 3.0
    kurt[(m < 2) | (var == 0.0)] = np.nan
    return _broadcast_rows(kurt, valid)


def _cs_extreme(a, fn):
    valid = ~np.isnan(a)
    rows = np.full(a.shape[0], np.nan)
    for i in range(a.shape[0]):
        vals = a[i][valid[i]]
        if vals.size:
            rows[i] = fn(vals)
    return _broadcast_rows(rows, valid)


def _cs_quantile(a, q):
    valid = ~np.isnan(a)
    rows = np.full(a.shape[0], np.nan)
    for i in range(a.shape[0]):
        vals = a[i][valid[i]]
        if vals.size:
            rows[i] = np.quantile(vals, q)
    return _broadcast_rows(rows, valid)


def _compare(a, b, fn):
    with np.errstate(all="ignore"):
        out = fn(a, b).astype(np.float64)
    out[np.isnan(a) | np.isnan(b)] = np.nan
    return out


def _logical(a, b, fn):
    out = fn(a != 0, b != 0).astype(np.float64)
    out[np.isnan(a) | np.isnan(b)] = np.nan
    return out


def _ifelse(c, a, b):
    out = np.where(c != 0, a, b)
    out[np.isnan(c)] = np.nan
    return _clean(out)


def _rsi(a, n):
    delta = _clean(a - _delay(a, 1))
    gains = np.where(delta > 0, delta, 0.0)
    losses = np.where(delta < 0, -delta, 0.0)
    gains[np.isnan(delta)] = np.nan
    losses[np.isnan(delta)] = np.nan
    avg_gain = kernels.rolling_mean(gains, n)
    avg_loss = kernels.rolling_mean(losses, n)
    total = avg_gain + avg_loss
    with np.errstate(all="ignore"):
        # ratio first: keeps the result inside [0, 100] exactly
        out = 100.0 * (avg_gain / total)
    out[total == 0.0] = 50.0  # flat window: neither gain nor loss
    out[np.isnan(total)] = np.nan
    return _clean(out)


def _ema(a, n):
    alpha = 2.0 / (n + 1.0)
    return kernels.recursive_smooth(a, alpha, 1.0 - alpha)


def _wma_weights(n: int) -> np.ndarray:
    # newest observation gets 0.9, oldest gets 0.9**n; stored oldest first
    w = 0.9 ** np.arange(n, 0, -1, dtype=np.float64)
    return w / w.sum()


def _decay_weights(n: int) -> np.ndarray:
    w = np.arange(1.0, n + 1.0)
    return w / w.sum()


class _Evaluator:
    def __init__(self, panel: Panel):
        self.panel = panel

    def variable(self, name: str) -> np.ndarray:
        if name == "return":
            close = self.panel.series["close"]
            prev = _delay(close, 1)
            with np.errstate(all="ignore"):
                return _clean(close / prev - 1.0)
        return self.panel.series[name].copy()

    def eval(self, node: Node) -> np.ndarray:
        if isinstance(node, Var):
            return self.variable(node.name)
        if isinstance(node, Const):
            shape = (self.panel.n_dates, self.panel.n_instruments)
            return np.full(shape, float(node.value))
        assert isinstance(node, Call)
        return self.call(node)

    def call(self, node: Call) -> np.ndarray:
        op = node.op
        if op in ("REGBETA", "REGRESI"):
            # the regressor may be SEQUENCE(n), which has no matrix value
            a = self.eval(node.args[0])
            b_node = node.args[1]
            n = int(node.args[2].value)
            if isinstance(b_node, Call) and b_node.op == "SEQUENCE":
                if op == "REGBETA":
                    return kernels.rolling_regbeta_seq(a, n)
                return kernels.rolling_regresi_seq(a, n)
            b = self.eval(b_node)
            if op == "REGBETA":
                return kernels.rolling_regbeta(a, b, n)
            return kernels.rolling_regresi(a, b, n)

        sig = CATALOGUE.lookup(op, len(node.args))
        data: list[np.ndarray] = []
        params: list[float] = []
        for slot, arg in zip(sig.slots, node.args):
            if slot in DATA_SLOTS:
                data.append(self.eval(arg))
            else:
                params.append(float(arg.value))

        if op == "ADD":
            return _clean(data[0] + data[1])
        if op == "SUB":
            return _clean(data[0] - data[1])
        if op == "MUL":
            return _clean(data[0] * data[1])
        if op == "DIV":
            with np.errstate(all="ignore"):
                return _clean(data[0] / data[1])
        if op == "NEG":
            return -data[0]

        if op == "RANK":
            return _cs_rank(data[0])
        if op == "ZSCORE":
            return cross_sectional_zscore(data[0])
        if op == "MEAN":
            return _cs_mean(data[0])
        if op == "STD":
            return _cs_std(data[0])
        if op == "SKEW":
            return _cs_skew(data[0])
        if op == "KURT":
            return _cs_kurt(data[0])
        if op == "MEDIAN":
            return _cs_quantile(data[0], 0.5)
        if op == "MAX" and len(node.args) == 1:
            return _cs_extreme(data[0], np.max)
        if op == "MIN" and len(node.args) == 1:
            return _cs_extreme(data[0], np.min)
        if op == "PERCENTILE" and len(node.args) == 2:
            return _cs_quantile(data[0], params[0])

        if op == "DELAY":
            return _delay(data[0], int(params[0]))
        if op == "DELTA":
            return _clean(data[0] - _delay(data[0], int(params[0])))
        if op == "TS_PCTCHANGE":
            prev = _delay(data[0], int(params[0]))
            with np.errstate(all="ignore"):
                return _clean(data[0] / prev - 1.0)

        if op == "TS_MEAN":
            return kernels.rolling_mean(data[0], int(params[0]))
        if op in ("TS_SUM", "SUMAC"):
            return kernels.rolling_sum(data[0], int(params[0]))
        if op == "TS_MIN":
            return kernels.rolling_min(data[0], int(params[0]))
        if op == "TS_MAX":
            return kernels.rolling_max(data[0], int(params[0]))
        if op == "TS_MEDIAN":
            return kernels.rolling_median(data[0], int(params[0]))
        if op == "TS_STD":
            return kernels.rolling_std(data[0], int(params[0]))
        if op == "TS_VAR":
            return kernels.rolling_var(data[0], int(params[0]))
        if op == "TS_MAD":
            return kernels.rolling_mad(data[0], int(params[0]))
        if op == "TS_RANK":
            return kernels.rolling_rank(data[0], int(params[0]))
        if op == "TS_ZSCORE":
            return kernels.rolling_zscore(data[0], int(params[0]))
        if op == "TS_QUANTILE":
            return kernels.rolling_quantile(data[0], int(params[0]), params[1])
        if op == "PERCENTILE":  # 3-argument rolling form
            return kernels.rolling_quantile(data[0], int(params[1]), params[0])
        if op in ("TS_ARGMAX", "HIGHDAY"):
            return kernels.rolling_days_since_max(data[0], int(params[0]))
        if op in ("TS_ARGMIN", "LOWDAY"):
            return kernels.rolling_days_since_min(data[0], int(params[0]))
        if op == "PROD":
            return kernels.rolling_prod(data[0], int(params[0]))

        if op == "TS_CORR":
            return kernels.rolling_corr(data[0], data[1], int(params[0]))
        if op == "TS_COVARIANCE":
            return kernels.rolling_cov(data[0], data[1], int(params[0]))

        if op == "SMA":
            n, m = params
            return kernels.recursive_smooth(data[0], m / n, (n - m) / n)
        if op == "EMA":
            return _ema(data[0], int(params[0]))
        if op == "WMA":
            return kernels.rolling_weighted_mean(data[0], _wma_weights(int(params[0])))
        if op == "DECAYLINEAR":
            return kernels.rolling_weighted_mean(data[0], _decay_weights(int(params[0])))

        if op == "LOG":
            with np.errstate(all="ignore"):
                out = np.log(data[0])
            out[data[0] <= 0] = np.nan
            return _clean(out)
        if op == "SQRT":
            with np.errstate(all="ignore"):
                return _clean(np.sqrt(data[0]))
        if op == "POW":
            with np.errstate(all="ignore"):
                return _clean(data[0] ** int(params[0]))
        if op == "SIGN":
            return _clean(np.sign(data[0]))
        if op == "EXP":
            with np.errstate(all="ignore"):
                return _clean(np.exp(data[0]))
        if op == "ABS":
            return np.abs(data[0])
        if op == "INV":
            with np.errstate(all="ignore"):
                return _clean(1.0 / data[0])
        if op == "FLOOR":
            return _clean(np.floor(data[0]))
        if op == "MAX":
            return np.maximum(data[0], data[1])
        if op == "MIN":
            return np.minimum(data[0], data[1])

        if op == "COUNT":
            return kernels.rolling_count(data[0], int(params[0]))
        if op == "SUMIF":
            return kernels.rolling_sumif(data[0], data[1], int(params[0]))
        if op == "FILTER":
            out = np.where(data[1] != 0, data[0], np.nan)
            out[np.isnan(data[1])] = np.nan
            return _clean(out)
        if op == "GT":
            return _compare(data[0], data[1], np.greater)
        if op == "LT":
            return _compare(data[0], data[1], np.less)
        if op == "GE":
            return _compare(data[0], data[1], np.greater_equal)
        if op == "LE":
            return _compare(data[0], data[1], np.less_equal)
        if op == "EQ":
            return _compare(data[0], data[1], np.equal)
        if op == "NE":
            return _compare(data[0], data[1], np.not_equal)
        if op == "AND":
            return _logical(data[0], data[1], np.logical_and)
        if op == "OR":
            return _logical(data[0], data[1], np.logical_or)
        if op == "IFELSE":
            return _ifelse(data[0], data[1], data[2])

        if op == "RSI":
            return _rsi(data[0], int(params[0]))
        if op == "MACD":
            return _clean(_ema(data[0], int(params[0])) - _ema(data[0], int(params[1])))
        if op == "BB_MIDDLE":
            return kernels.rolling_mean(data[0], int(params[0]))
        if op == "BB_UPPER":
            n = int(params[0])
            return _clean(
                kernels.rolling_mean(data[0], n) + 2.0 * kernels.rolling_std(data[0], n)
            )
        if op == "BB_LOWER":
            n = int(params[0])
            return _clean(
                kernels.rolling_mean(data[0], n) - 2.0 * kernels.rolling_std(data[0], n)
            )

        raise AssertionError(f"unhandled operator {op}")  # pragma: no cover


def evaluate(expr: FactorExpr, panel: Panel) -> np.ndarray:
    """Pointwise factor values for every (date, instrument) cell."""
    return _Evaluator(panel).eval(expr.root)
