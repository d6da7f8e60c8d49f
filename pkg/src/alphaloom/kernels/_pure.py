"""Pure-numpy rolling kernels (fallback backend).

All kernels share the same contract:

- input matrices are (dates x instruments) float64 with NaN as the
  missing marker;
- a window of length n is "full": the first n-1 rows are missing, and
  any window containing a missing cell yields missing;
- non-finite intermediate results (division by zero, overflow) are
  mapped to missing, never raised.

Variance/covariance use the population convention and are computed in
deviation form so constant windows give an exact 0.0 (the zero-variance
guards test for exact zero).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def _sanitize(out: np.ndarray) -> np.ndarray:
    out[~np.isfinite(out)] = np.nan
    return out


def _windows(a: np.ndarray, n: int) -> np.ndarray:
    # (T, N) -> (T-n+1, N, n) zero-copy view, window on the last axis,
    # oldest observation first
    return np.lib.stride_tricks.sliding_window_view(a, n, axis=0)


def _pad(tail: np.ndarray, n: int, shape: tuple[int, int]) -> np.ndarray:
    out = np.full(shape, np.nan)
    out[n - 1 :] = tail
    return out


def _too_long(a: np.ndarray, n: int) -> bool:
    return n > a.shape[0]


def rolling_mean(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(_windows(a, n).mean(axis=-1), n, a.shape))


def rolling_sum(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(_windows(a, n).sum(axis=-1), n, a.shape))


def rolling_prod(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(_windows(a, n).prod(axis=-1), n, a.shape))


def rolling_min(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    return _sanitize(_pad(_windows(a, n).min(axis=-1), n, a.shape))


def rolling_max(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    return _sanitize(_pad(_windows(a, n).max(axis=-1), n, a.shape))


def _var_tail(w: np.ndarray) -> np.ndarray:
    mean = w.mean(axis=-1)
    dev = w - mean[..., None]
    return (dev * dev).mean(axis=-1)


def rolling_var(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(_var_tail(_windows(a, n)), n, a.shape))


def rolling_std(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(np.sqrt(_var_tail(_windows(a, n))), n, a.shape))


def rolling_median(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    return _sanitize(_pad(np.median(_windows(a, n), axis=-1), n, a.shape))


def rolling_mad(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    med = np.median(w, axis=-1)
    return _sanitize(_pad(np.median(np.abs(w - med[..., None]), axis=-1), n, a.shape))


def rolling_quantile(a, n, q):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    nan_mask = np.isnan(w).any(axis=-1)
    tail = np.quantile(np.where(np.isnan(w), 0.0, w), q, axis=-1)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_rank(a, n):
    """Rank of the newest value within its window, scaled to [0, 1].

    Average ranks on ties; a length-1 window ranks 0.5.
    """
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    last = w[..., -1][..., None]
    nan_mask = np.isnan(w).any(axis=-1)
    if n == 1:
        tail = np.full(w.shape[:2], 0.5)
    else:
        less = (w < last).sum(axis=-1)
        equal = (w == last).sum(axis=-1)
        tail = (less + 0.5 * (equal - 1)) / (n - 1)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_zscore(a, n):
    """(newest - window mean) / window population std; zero std -> missing."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    mean = w.mean(axis=-1)
    dev = w - mean[..., None]
    var = (dev * dev).mean(axis=-1)
    with np.errstate(all="ignore"):
        tail = (w[..., -1] - mean) / np.sqrt(var)
    tail[var == 0.0] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_days_since_max(a, n):
    """Days since the window maximum; ties resolve to the most recent."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    nan_mask = np.isnan(w).any(axis=-1)
    tail = np.argmax(w[..., ::-1], axis=-1).astype(np.float64)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_days_since_min(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    w = _windows(a, n)
    nan_mask = np.isnan(w).any(axis=-1)
    tail = np.argmin(w[..., ::-1], axis=-1).astype(np.float64)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_cov(a, b, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    wa, wb = _windows(a, n), _windows(b, n)
    da = wa - wa.mean(axis=-1)[..., None]
    db = wb - wb.mean(axis=-1)[..., None]
    with np.errstate(all="ignore"):
        return _sanitize(_pad((da * db).mean(axis=-1), n, a.shape))


def rolling_corr(a, b, n):
    """Population correlation; zero variance in either window -> missing."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    wa, wb = _windows(a, n), _windows(b, n)
    da = wa - wa.mean(axis=-1)[..., None]
    db = wb - wb.mean(axis=-1)[..., None]
    cov = (da * db).mean(axis=-1)
    va = (da * da).mean(axis=-1)
    vb = (db * db).mean(axis=-1)
    with np.errstate(all="ignore"):
        tail = cov / np.sqrt(va * vb)
    tail[(va == 0.0) | (vb == 0.0)] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_weighted_mean(a, weights):
    """Rolling dot product with a fixed weight vector (oldest first)."""
    weights = np.asarray(weights, dtype=np.float64)
    n = len(weights)
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad((_windows(a, n) * weights).sum(axis=-1), n, a.shape))


def rolling_count(c, n):
    """Count of non-zero cells per window (missing-strict)."""
    if _too_long(c, n):
        return np.full(c.shape, np.nan)
    w = _windows(c, n)
    nan_mask = np.isnan(w).any(axis=-1)
    tail = (w != 0).sum(axis=-1).astype(np.float64)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, c.shape))


def rolling_sumif(a, c, n):
    """Sum of a over window cells where c is non-zero (missing-strict)."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    wa, wc = _windows(a, n), _windows(c, n)
    nan_mask = np.isnan(wa).any(axis=-1) | np.isnan(wc).any(axis=-1)
    with np.errstate(all="ignore"):
        tail = (np.where(np.isnan(wa), 0.0, wa) * (wc != 0)).sum(axis=-1)
    tail[nan_mask] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def _reg_parts(a, b, n):
    wa, wb = _windows(a, n), _windows(b, n)
    ma = wa.mean(axis=-1)
    mb = wb.mean(axis=-1)
    da = wa - ma[..., None]
    db = wb - mb[..., None]
    cov = (da * db).mean(axis=-1)
    vb = (db * db).mean(axis=-1)
    return wa, wb, ma, mb, cov, vb


def rolling_regbeta(a, b, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    _, _, _, _, cov, vb = _reg_parts(a, b, n)
    with np.errstate(all="ignore"):
        tail = cov / vb
    tail[vb == 0.0] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def rolling_regresi(a, b, n):
    """Current-point residual of the window OLS of a on b."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    wa, wb, ma, mb, cov, vb = _reg_parts(a, b, n)
    with np.errstate(all="ignore"):
        beta = cov / vb
        tail = (wa[..., -1] - ma) - beta * (wb[..., -1] - mb)
    tail[vb == 0.0] = np.nan
    return _sanitize(_pad(tail, n, a.shape))


def _seq_parts(a, n):
    seq = np.arange(1.0, n + 1.0)
    dseq = seq - seq.mean()
    vb = float((dseq * dseq).mean())
    wa = _windows(a, n)
    ma = wa.mean(axis=-1)
    cov = ((wa - ma[..., None]) * dseq).mean(axis=-1)
    return wa, ma, dseq, cov, vb


def rolling_regbeta_seq(a, n):
    """Slope of a on the ramp 1..n over each window."""
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    _, _, _, cov, vb = _seq_parts(a, n)
    if vb == 0.0:
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        return _sanitize(_pad(cov / vb, n, a.shape))


def rolling_regresi_seq(a, n):
    if _too_long(a, n):
        return np.full(a.shape, np.nan)
    wa, ma, dseq, cov, vb = _seq_parts(a, n)
    if vb == 0.0:
        return np.full(a.shape, np.nan)
    with np.errstate(all="ignore"):
        beta = cov / vb
        tail = (wa[..., -1] - ma) - beta * dseq[-1]
    return _sanitize(_pad(tail, n, a.shape))


def recursive_smooth(a, take, keep):
    """Y_t = take*A_t + keep*Y_{t-1}, seeded at the first non-missing A.

    Missing cells emit missing and leave the state untouched.
    """
    T, N = a.shape
    out = np.full((T, N), np.nan)
    y = np.zeros(N)
    started = np.zeros(N, dtype=bool)
    for t in range(T):
        x = a[t]
        valid = ~np.isnan(x)
        fresh = valid & ~started
        cont = valid & started
        y[fresh] = x[fresh]
        y[cont] = take * x[cont] + keep * y[cont]
        started |= valid
        out[t, valid] = y[valid]
    return _sanitize(out)
