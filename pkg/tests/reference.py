"""Naive reference evaluator used as the oracle for the production DSL.

Every operator is recomputed per date with an O(dates x window) scan,
kept deliberately independent of the production kernels: plain loops
over window offsets, explicit running scans for argmax/argmin, and
per-row sorts for the cross-sectional statistics.  Semantics mirror the
documented conventions (full windows, NaN-strict, population moments,
non-finite results become missing).
"""

from __future__ import annotations

import numpy as np

from alphaloom.dsl.ast import Call, Const, Var


def _san(out):
    out[~np.isfinite(out)] = np.nan
    return out


def _roll(a, n, fn):
    """Per-date window recomputation; fn maps an (n, N) window to (N,)."""
    T, N = a.shape
    out = np.full((T, N), np.nan)
    for t in range(n - 1, T):
        window = a[t - n + 1 : t + 1]
        values = fn(window)
        bad = np.isnan(window).any(axis=0)
        values = np.where(bad, np.nan, values)
        out[t] = values
    return _san(out)


def _roll2(a, b, n, fn):
    T, N = a.shape
    out = np.full((T, N), np.nan)
    for t in range(n - 1, T):
        wa = a[t - n + 1 : t + 1]
        wb = b[t - n + 1 : t + 1]
        values = fn(wa, wb)
        bad = np.isnan(wa).any(axis=0) | np.isnan(wb).any(axis=0)
        out[t] = np.where(bad, np.nan, values)
    return _san(out)


def _pop_var(w):
    mean = w.mean(axis=0)
    dev = w - mean
    return (dev * dev).mean(axis=0)


def _ref_rank_last(w):
    last = w[-1]
    n = w.shape[0]
    if n == 1:
        return np.full(last.shape, 0.5)
    less = (w < last).sum(axis=0)
    equal = (w == last).sum(axis=0)
    return (less + 0.5 * (equal - 1)) / (n - 1)


def _ref_zscore_last(w):
    mean = w.mean(axis=0)
    var = _pop_var(w)
    with np.errstate(all="ignore"):
        z = (w[-1] - mean) / np.sqrt(var)
    return np.where(var == 0.0, np.nan, z)


def _ref_days_since(w, want_max):
    # explicit newest-to-oldest scan; ties keep the most recent offset
    n, N = w.shape
    best = w[-1].copy()
    days = np.zeros(N)
    for offset in range(1, n):
        row = w[-1 - offset]
        better = row > best if want_max else row < best
        best = np.where(better, row, best)
        days = np.where(better, float(offset), days)
    return days


def _ref_quantile(w, q):
    n, N = w.shape
    out = np.empty(N)
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    frac = pos - lo
    for j in range(N):
        ordered = sorted(w[:, j])
        if lo + 1 < n:
            out[j] = ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])
        else:
            out[j] = ordered[-1]
    return out


def _ref_corr(wa, wb):
    da = wa - wa.mean(axis=0)
    db = wb - wb.mean(axis=0)
    cov = (da * db).mean(axis=0)
    va = (da * da).mean(axis=0)
    vb = (db * db).mean(axis=0)
    with np.errstate(all="ignore"):
        r = cov / np.sqrt(va * vb)
    return np.where((va == 0.0) | (vb == 0.0), np.nan, r)


def _ref_beta(wa, wb):
    da = wa - wa.mean(axis=0)
    db = wb - wb.mean(axis=0)
    cov = (da * db).mean(axis=0)
    vb = (db * db).mean(axis=0)
    with np.errstate(all="ignore"):
        beta = cov / vb
    return np.where(vb == 0.0, np.nan, beta)


def _ref_resi(wa, wb):
    beta = _ref_beta(wa, wb)
    alpha = wa.mean(axis=0) - beta * wb.mean(axis=0)
    return wa[-1] - alpha - beta * wb[-1]


def _ref_delay(a, n):
    T, N = a.shape
    out = np.full((T, N), np.nan)
    for t in range(n, T):
        out[t] = a[t - n]
    return out


def _ref_recursive(a, take, keep):
    T, N = a.shape
    out = np.full((T, N), np.nan)
    for j in range(N):
        state = np.nan
        for t in range(T):
            x = a[t, j]
            if np.isnan(x):
                continue
            state = x if np.isnan(state) else take * x + keep * state
            out[t, j] = state
    return _san(out)


def _ref_cs_rank_row(row):
    valid = [j for j in range(row.size) if not np.isnan(row[j])]
    out = np.full(row.size, np.nan)
    m = len(valid)
    if m == 0:
        return out
    if m == 1:
        out[valid[0]] = 0.5
        return out
    values = [row[j] for j in valid]
    for j in valid:
        less = sum(1 for v in values if v < row[j])
        equal = sum(1 for v in values if v == row[j])
        rank = less + 0.5 * (equal + 1)  # 1-based average rank
        out[j] = (rank - 1) / (m - 1)
    return out


def _per_row(a, fn):
    out = np.full(a.shape, np.nan)
    for i in range(a.shape[0]):
        out[i] = fn(a[i])
    return _san(out)


def _row_stat(row, stat):
    valid = row[~np.isnan(row)]
    out = np.full(row.shape, np.nan)
    if valid.size == 0:
        return out
    value = stat(valid)
    out[~np.isnan(row)] = value
    return out


def _row_moment(valid, power):
    mean = valid.mean()
    return ((valid - mean) ** power).mean()


class ReferenceEvaluator:
    def __init__(self, panel):
        self.panel = panel

    def var(self, name):
        if name == "return":
            close = self.panel.series["close"]
            prev = _ref_delay(close, 1)
            with np.errstate(all="ignore"):
                return _san(close / prev - 1.0)
        return self.panel.series[name].copy()

    def eval(self, node):
        if isinstance(node, Var):
            return self.var(node.name)
        if isinstance(node, Const):
            return np.full((self.panel.n_dates, self.panel.n_instruments), float(node.value))
        assert isinstance(node, Call)
        return self.call(node)

    def call(self, node):
        op = node.op
        args = node.args

        def ev(i):
            return self.eval(args[i])

        def cv(i):
            return float(args[i].value)

        if op == "ADD":
            return _san(ev(0) + ev(1))
        if op == "SUB":
            return _san(ev(0) - ev(1))
        if op == "MUL":
            return _san(ev(0) * ev(1))
        if op == "DIV":
            with np.errstate(all="ignore"):
                return _san(ev(0) / ev(1))
        if op == "NEG":
            return -ev(0)

        if op == "RANK":
            return _per_row(ev(0), _ref_cs_rank_row)
        if op == "ZSCORE":

            def zrow(row):
                valid = row[~np.isnan(row)]
                out = np.full(row.shape, np.nan)
                if valid.size == 0:
                    return out
                std = np.sqrt(_row_moment(valid, 2))
                if valid.size < 2 or std == 0.0:
                    out[~np.isnan(row)] = 0.0
                else:
                    out[~np.isnan(row)] = (row[~np.isnan(row)] - valid.mean()) / std
                return out

            return _per_row(ev(0), zrow)
        if op == "MEAN":
            return _per_row(ev(0), lambda r: _row_stat(r, np.mean))
        if op == "STD":
            return _per_row(ev(0), lambda r: _row_stat(r, lambda v: np.sqrt(_row_moment(v, 2))))
        if op == "SKEW":

            def skew(valid):
                if valid.size < 2:
                    return np.nan
                var = _row_moment(valid, 2)
                if var == 0.0:
                    return np.nan
                return _row_moment(valid, 3) / var**1.5

            return _per_row(ev(0), lambda r: _row_stat(r, skew))
        if op == "KURT":

            def kurt(valid):
                if valid.size < 2:
                    return np.nan
                var = _row_moment(valid, 2)
                if var == 0.0:
                    return np.nan
                return _row_moment(valid, 4) / var**2 - 3.0

            return _per_row(ev(0), lambda r: _row_stat(r, kurt))
        if op == "MEDIAN":
            return _per_row(ev(0), lambda r: _row_stat(r, np.median))
        if op == "MAX" and len(args) == 1:
            return _per_row(ev(0), lambda r: _row_stat(r, np.max))
        if op == "MIN" and len(args) == 1:
            return _per_row(ev(0), lambda r: _row_stat(r, np.min))
        if op == "PERCENTILE" and len(args) == 2:
            q = cv(1)
            return _per_row(ev(0), lambda r: _row_stat(r, lambda v: np.quantile(v, q)))

        if op == "DELAY":
            return _ref_delay(ev(0), int(cv(1)))
        if op == "DELTA":
            a = ev(0)
            return _san(a - _ref_delay(a, int(cv(1))))
        if op == "TS_PCTCHANGE":
            a = ev(0)
            with np.errstate(all="ignore"):
                return _san(a / _ref_delay(a, int(cv(1))) - 1.0)

        if op == "TS_MEAN":
            return _roll(ev(0), int(cv(1)), lambda w: w.mean(axis=0))
        if op in ("TS_SUM", "SUMAC"):
            return _roll(ev(0), int(cv(1)), lambda w: w.sum(axis=0))
        if op == "TS_MIN":
            return _roll(ev(0), int(cv(1)), lambda w: w.min(axis=0))
        if op == "TS_MAX":
            return _roll(ev(0), int(cv(1)), lambda w: w.max(axis=0))
        if op == "TS_MEDIAN":
            return _roll(ev(0), int(cv(1)), lambda w: _ref_quantile(w, 0.5))
        if op == "TS_STD":
            return _roll(ev(0), int(cv(1)), lambda w: np.sqrt(_pop_var(w)))
        if op == "TS_VAR":
            return _roll(ev(0), int(cv(1)), _pop_var)
        if op == "TS_MAD":

            def mad(w):
                med = _ref_quantile(w, 0.5)
                return _ref_quantile(np.abs(w - med), 0.5)

            return _roll(ev(0), int(cv(1)), mad)
        if op == "TS_RANK":
            return _roll(ev(0), int(cv(1)), _ref_rank_last)
        if op == "TS_ZSCORE":
            return _roll(ev(0), int(cv(1)), _ref_zscore_last)
        if op == "TS_QUANTILE":
            q = cv(2)
            return _roll(ev(0), int(cv(1)), lambda w: _ref_quantile(w, q))
        if op == "PERCENTILE":  # rolling 3-arg form
            q = cv(1)
            return _roll(ev(0), int(cv(2)), lambda w: _ref_quantile(w, q))
        if op in ("TS_ARGMAX", "HIGHDAY"):
            return _roll(ev(0), int(cv(1)), lambda w: _ref_days_since(w, True))
        if op in ("TS_ARGMIN", "LOWDAY"):
            return _roll(ev(0), int(cv(1)), lambda w: _ref_days_since(w, False))
        if op == "PROD":
            return _roll(ev(0), int(cv(1)), lambda w: w.prod(axis=0))

        if op == "TS_CORR":
            return _roll2(ev(0), ev(1), int(cv(2)), _ref_corr)
        if op == "TS_COVARIANCE":
            return _roll2(
                ev(0),
                ev(1),
                int(cv(2)),
                lambda wa, wb: ((wa - wa.mean(0)) * (wb - wb.mean(0))).mean(0),
            )

        if op == "SMA":
            n, m = cv(1), cv(2)
            return _ref_recursive(ev(0), m / n, (n - m) / n)
        if op == "EMA":
            n = cv(1)
            alpha = 2.0 / (n + 1.0)
            return _ref_recursive(ev(0), alpha, 1.0 - alpha)
        if op == "WMA":
            n = int(cv(1))
            # newest-first weights 0.9^1..0.9^n, normalized
            newest_first = np.array([0.9 ** (k + 1) for k in range(n)])
            weights = newest_first[::-1] / newest_first.sum()
            return _roll(ev(0), n, lambda w: (w * weights[:, None]).sum(axis=0))
        if op == "DECAYLINEAR":
            n = int(cv(1))
            weights = np.arange(1, n + 1, dtype=float)
            weights = weights / weights.sum()
            return _roll(ev(0), n, lambda w: (w * weights[:, None]).sum(axis=0))

        if op == "LOG":
            a = ev(0)
            with np.errstate(all="ignore"):
                out = np.log(a)
            out[a <= 0] = np.nan
            return _san(out)
        if op == "SQRT":
            with np.errstate(all="ignore"):
                return _san(np.sqrt(ev(0)))
        if op == "POW":
            with np.errstate(all="ignore"):
                return _san(ev(0) ** int(cv(1)))
        if op == "SIGN":
            return _san(np.sign(ev(0)))
        if op == "EXP":
            with np.errstate(all="ignore"):
                return _san(np.exp(ev(0)))
        if op == "ABS":
            return np.abs(ev(0))
        if op == "INV":
            with np.errstate(all="ignore"):
                return _san(1.0 / ev(0))
        if op == "FLOOR":
            return _san(np.floor(ev(0)))
        if op == "MAX":
            a, b = ev(0), ev(1)
            out = np.where(a >= b, a, b)
            out[np.isnan(a) | np.isnan(b)] = np.nan
            return _san(out)
        if op == "MIN":
            a, b = ev(0), ev(1)
            out = np.where(a <= b, a, b)
            out[np.isnan(a) | np.isnan(b)] = np.nan
            return _san(out)

        if op == "COUNT":
            return _roll(ev(0), int(cv(1)), lambda w: (w != 0).sum(axis=0).astype(float))
        if op == "SUMIF":
            a, c = ev(0), ev(2)
            return _roll2(a, c, int(cv(1)), lambda wa, wc: (wa * (wc != 0)).sum(axis=0))
        if op == "FILTER":
            a, c = ev(0), ev(1)
            out = np.where(np.isnan(c), np.nan, np.where(c != 0, a, np.nan))
            return _san(out)
        if op in ("GT", "LT", "GE", "LE", "EQ", "NE"):
            a, b = ev(0), ev(1)
            fn = {
                "GT": np.greater,
                "LT": np.less,
                "GE": np.greater_equal,
                "LE": np.less_equal,
                "EQ": np.equal,
                "NE": np.not_equal,
            }[op]
            with np.errstate(all="ignore"):
                out = fn(a, b).astype(float)
            out[np.isnan(a) | np.isnan(b)] = np.nan
            return out
        if op in ("AND", "OR"):
            a, b = ev(0), ev(1)
            fn = np.logical_and if op == "AND" else np.logical_or
            out = fn(a != 0, b != 0).astype(float)
            out[np.isnan(a) | np.isnan(b)] = np.nan
            return out
        if op == "IFELSE":
            c, a, b = ev(0), ev(1), ev(2)
            out = np.where(c != 0, a, b)
            out[np.isnan(c)] = np.nan
            return _san(out)

        if op in ("REGBETA", "REGRESI"):
            a = ev(0)
            n = int(args[2].value)
            b_node = args[1]
            if isinstance(b_node, Call) and b_node.op == "SEQUENCE":
                seq = np.arange(1.0, n + 1.0)
                b = np.tile(seq[:, None], (1, a.shape[1]))

                def seq_fn(w):
                    fn = _ref_beta if op == "REGBETA" else _ref_resi
                    return fn(w, b)

                return _roll(a, n, seq_fn)
            b = self.eval(b_node)
            fn = _ref_beta if op == "REGBETA" else _ref_resi
            return _roll2(a, b, n, fn)

        if op == "RSI":
            n = int(cv(1))
            a = ev(0)
            delta = _san(a - _ref_delay(a, 1))
            gains = np.where(np.isnan(delta), np.nan, np.where(delta > 0, delta, 0.0))
            losses = np.where(np.isnan(delta), np.nan, np.where(delta < 0, -delta, 0.0))
            avg_gain = _roll(gains, n, lambda w: w.mean(axis=0))
            avg_loss = _roll(losses, n, lambda w: w.mean(axis=0))
            total = avg_gain + avg_loss
            with np.errstate(all="ignore"):
                out = 100.0 * (avg_gain / total)
            out = np.where(total == 0.0, 50.0, out)
            out[np.isnan(total)] = np.nan
            return _san(out)
        if op == "MACD":
            short_n, long_n = cv(1), cv(2)
            a = ev(0)
            short_alpha = 2.0 / (short_n + 1.0)
            long_alpha = 2.0 / (long_n + 1.0)
            return _san(
                _ref_recursive(a, short_alpha, 1.0 - short_alpha)
                - _ref_recursive(a, long_alpha, 1.0 - long_alpha)
            )
        if op == "BB_MIDDLE":
            return _roll(ev(0), int(cv(1)), lambda w: w.mean(axis=0))
        if op == "BB_UPPER":
            n = int(cv(1))
            return _roll(ev(0), n, lambda w: w.mean(axis=0) + 2.0 * np.sqrt(_pop_var(w)))
        if op == "BB_LOWER":
            n = int(cv(1))
            return _roll(ev(0), n, lambda w: w.mean(axis=0) - 2.0 * np.sqrt(_pop_var(w)))

        raise AssertionError(f"reference evaluator missing operator {op}")


def ref_evaluate(expr, panel):
    return ReferenceEvaluator(panel).eval(expr.root)
