# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rolling kernels.

Same contract as ``_pure``: (dates x instruments) float64 matrices, NaN
as missing, full windows, population moments in deviation form.  Window
statistics are recomputed per window with left-to-right accumulation,
which keeps NaN handling exact and results deterministic.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isnan, sqrt, floor

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double NAN_VALUE():
    return <double> float("nan")


def _sanitize(out):
    out[~np.isfinite(out)] = np.nan
    return out


cdef bint _window_ok(const double[:, ::1] a, Py_ssize_t t, Py_ssize_t j, Py_ssize_t n):
    cdef Py_ssize_t k
    for k in range(t - n + 1, t + 1):
        if isnan(a[k, j]):
            return False
    return True


def rolling_mean(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = 0.0
            for k in range(t - n + 1, t + 1):
                s += av[k, j]
            ov[t, j] = s / n
    return _sanitize(out)


def rolling_sum(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = 0.0
            for k in range(t - n + 1, t + 1):
                s += av[k, j]
            ov[t, j] = s
    return _sanitize(out)


def rolling_prod(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = 1.0
            for k in range(t - n + 1, t + 1):
                s *= av[k, j]
            ov[t, j] = s
    return _sanitize(out)


def rolling_min(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = av[t - n + 1, j]
            for k in range(t - n + 2, t + 1):
                if av[k, j] < s:
                    s = av[k, j]
            ov[t, j] = s
    return _sanitize(out)


def rolling_max(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = av[t - n + 1, j]
            for k in range(t - n + 2, t + 1):
                if av[k, j] > s:
                    s = av[k, j]
            ov[t, j] = s
    return _sanitize(out)


cdef inline double _window_mean(const double[:, ::1] a, Py_ssize_t t, Py_ssize_t j, Py_ssize_t n):
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(t - n + 1, t + 1):
        s += a[k, j]
    return s / n


cdef inline double _window_var(const double[:, ::1] a, Py_ssize_t t, Py_ssize_t j,
                               Py_ssize_t n, double mean):
    cdef double s = 0.0, d
    cdef Py_ssize_t k
    for k in range(t - n + 1, t + 1):
        d = a[k, j] - mean
        s += d * d
    return s / n


def rolling_var(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double m
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            m = _window_mean(av, t, j, n)
            ov[t, j] = _window_var(av, t, j, n, m)
    return _sanitize(out)


def rolling_std(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double m
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            m = _window_mean(av, t, j, n)
            ov[t, j] = sqrt(_window_var(av, t, j, n, m))
    return _sanitize(out)


cdef void _sorted_window(const double[:, ::1] a, Py_ssize_t t, Py_ssize_t j,
                         Py_ssize_t n, double[::1] buf):
    # insertion sort; windows are short
    cdef Py_ssize_t k, i
    cdef double v
    for k in range(n):
        buf[k] = a[t - n + 1 + k, j]
    for k in range(1, n):
        v = buf[k]
        i = k - 1
        while i >= 0 and buf[i] > v:
            buf[i + 1] = buf[i]
            i -= 1
        buf[i + 1] = v


cdef inline double _quantile_sorted(double[::1] buf, Py_ssize_t n, double q):
    # linear interpolation between order statistics
    cdef double pos = q * (n - 1)
    cdef Py_ssize_t lo = <Py_ssize_t> floor(pos)
    cdef double frac = pos - lo
    if lo + 1 >= n:
        return buf[n - 1]
    return buf[lo] + frac * (buf[lo + 1] - buf[lo])


def rolling_median(a, Py_ssize_t n):
    return rolling_quantile(a, n, 0.5)


def rolling_quantile(a, Py_ssize_t n, double q):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    if n > T:
        return out
    buf_arr = np.empty(n)
    cdef double[::1] buf = buf_arr
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            _sorted_window(av, t, j, n, buf)
            ov[t, j] = _quantile_sorted(buf, n, q)
    return _sanitize(out)


def rolling_mad(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    if n > T:
        return out
    buf_arr = np.empty(n)
    dev_arr = np.empty(n)
    cdef double[::1] buf = buf_arr
    cdef double[::1] dev = dev_arr
    cdef double med, v
    cdef Py_ssize_t i
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            _sorted_window(av, t, j, n, buf)
            med = _quantile_sorted(buf, n, 0.5)
            for k in range(n):
                dev[k] = av[t - n + 1 + k, j] - med
                if dev[k] < 0:
                    dev[k] = -dev[k]
            # sort deviations in place
            for k in range(1, n):
                v = dev[k]
                i = k - 1
                while i >= 0 and dev[i] > v:
                    dev[i + 1] = dev[i]
                    i -= 1
                dev[i + 1] = v
            ov[t, j] = _quantile_sorted(dev, n, 0.5)
    return _sanitize(out)


def rolling_rank(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double last
    cdef Py_ssize_t less, equal
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            if n == 1:
                ov[t, j] = 0.5
                continue
            last = av[t, j]
            less = 0
            equal = 0
            for k in range(t - n + 1, t + 1):
                if av[k, j] < last:
                    less += 1
                elif av[k, j] == last:
                    equal += 1
            ov[t, j] = (less + 0.5 * (equal - 1)) / (n - 1)
    return _sanitize(out)


def rolling_zscore(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double m, v
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            m = _window_mean(av, t, j, n)
            v = _window_var(av, t, j, n, m)
            if v == 0.0:
                continue
            ov[t, j] = (av[t, j] - m) / sqrt(v)
    return _sanitize(out)


def rolling_days_since_max(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, o, best_o
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double best, v
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            best = av[t, j]
            best_o = 0
            for o in range(1, n):
                v = av[t - o, j]
                if v > best:
                    best = v
                    best_o = o
            ov[t, j] = best_o
    return _sanitize(out)


def rolling_days_since_min(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, o, best_o
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double best, v
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            best = av[t, j]
            best_o = 0
            for o in range(1, n):
                v = av[t - o, j]
                if v < best:
                    best = v
                    best_o = o
            ov[t, j] = best_o
    return _sanitize(out)


def rolling_cov(a, b, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[:, ::1] bv = b
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double ma, mb, s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n) or not _window_ok(bv, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            mb = _window_mean(bv, t, j, n)
            s = 0.0
            for k in range(t - n + 1, t + 1):
                s += (av[k, j] - ma) * (bv[k, j] - mb)
            ov[t, j] = s / n
    return _sanitize(out)


def rolling_corr(a, b, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[:, ::1] bv = b
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double ma, mb, cov, va, vb, da, db
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n) or not _window_ok(bv, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            mb = _window_mean(bv, t, j, n)
            cov = 0.0
            va = 0.0
            vb = 0.0
            for k in range(t - n + 1, t + 1):
                da = av[k, j] - ma
                db = bv[k, j] - mb
                cov += da * db
                va += da * da
                vb += db * db
            if va == 0.0 or vb == 0.0:
                continue
            ov[t, j] = (cov / n) / sqrt((va / n) * (vb / n))
    return _sanitize(out)


def rolling_weighted_mean(a, weights):
    a = np.ascontiguousarray(a, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[::1] wv = weights
    cdef Py_ssize_t n = wv.shape[0]
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            s = 0.0
            for k in range(n):
                s += av[t - n + 1 + k, j] * wv[k]
            ov[t, j] = s
    return _sanitize(out)


def rolling_count(c, Py_ssize_t n):
    c = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] cv = c
    cdef Py_ssize_t T = cv.shape[0], N = cv.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(cv, t, j, n):
                continue
            s = 0.0
            for k in range(t - n + 1, t + 1):
                if cv[k, j] != 0.0:
                    s += 1.0
            ov[t, j] = s
    return _sanitize(out)


def rolling_sumif(a, c, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[:, ::1] cv = c
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double s
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n) or not _window_ok(cv, t, j, n):
                continue
            s = 0.0
            for k in range(t - n + 1, t + 1):
                if cv[k, j] != 0.0:
                    s += av[k, j]
            ov[t, j] = s
    return _sanitize(out)


def rolling_regbeta(a, b, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[:, ::1] bv = b
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double ma, mb, cov, vb, db
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n) or not _window_ok(bv, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            mb = _window_mean(bv, t, j, n)
            cov = 0.0
            vb = 0.0
            for k in range(t - n + 1, t + 1):
                db = bv[k, j] - mb
                cov += (av[k, j] - ma) * db
                vb += db * db
            if vb == 0.0:
                continue
            ov[t, j] = cov / vb
    return _sanitize(out)


def rolling_regresi(a, b, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef const double[:, ::1] bv = b
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double ma, mb, cov, vb, db, beta
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n) or not _window_ok(bv, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            mb = _window_mean(bv, t, j, n)
            cov = 0.0
            vb = 0.0
            for k in range(t - n + 1, t + 1):
                db = bv[k, j] - mb
                cov += (av[k, j] - ma) * db
                vb += db * db
            if vb == 0.0:
                continue
            beta = cov / vb
            ov[t, j] = (av[t, j] - ma) - beta * (bv[t, j] - mb)
    return _sanitize(out)


def rolling_regbeta_seq(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double mseq = (n + 1) / 2.0
    cdef double vb = 0.0, d
    for k in range(1, n + 1):
        d = k - mseq
        vb += d * d
    vb /= n
    if vb == 0.0:
        return out
    cdef double ma, cov
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            cov = 0.0
            for k in range(n):
                cov += (av[t - n + 1 + k, j] - ma) * ((k + 1) - mseq)
            ov[t, j] = (cov / n) / vb
    return _sanitize(out)


def rolling_regresi_seq(a, Py_ssize_t n):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j, k
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    cdef double mseq = (n + 1) / 2.0
    cdef double vb = 0.0, d
    for k in range(1, n + 1):
        d = k - mseq
        vb += d * d
    vb /= n
    if vb == 0.0:
        return out
    cdef double ma, cov, beta
    for t in range(n - 1, T):
        for j in range(N):
            if not _window_ok(av, t, j, n):
                continue
            ma = _window_mean(av, t, j, n)
            cov = 0.0
            for k in range(n):
                cov += (av[t - n + 1 + k, j] - ma) * ((k + 1) - mseq)
            beta = (cov / n) / vb
            ov[t, j] = (av[t, j] - ma) - beta * (n - mseq)
    return _sanitize(out)


def recursive_smooth(a, double take, double keep):
    a = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] av = a
    cdef Py_ssize_t T = av.shape[0], N = av.shape[1], t, j
    out = np.full((T, N), np.nan)
    cdef double[:, ::1] ov = out
    state_arr = np.zeros(N)
    started_arr = np.zeros(N, dtype=np.uint8)
    cdef double[::1] state = state_arr
    cdef unsigned char[::1] started = started_arr
    cdef double x
    for t in range(T):
        for j in range(N):
            x = av[t, j]
            if isnan(x):
                continue
            if started[j]:
                state[j] = take * x + keep * state[j]
            else:
                state[j] = x
                started[j] = 1
            ov[t, j] = state[j]
    return _sanitize(out)
