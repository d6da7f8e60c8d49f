"""Rolling-window kernels with a compiled core and a pure-numpy fallback.

The compiled extension is preferred when importable; set the
environment variable ``ALPHALOOM_PURE_PY=1`` to force the fallback.
Both backends implement the identical function set and semantics, and
``benchmarks/bench_kernels.py`` compares their throughput.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("ALPHALOOM_PURE_PY"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND_NAME

KERNEL_NAMES = [
    "rolling_mean",
    "rolling_sum",
    "rolling_prod",
    "rolling_min",
    "rolling_max",
    "rolling_var",
    "rolling_std",
    "rolling_median",
    "rolling_mad",
    "rolling_quantile",
    "rolling_rank",
    "rolling_zscore",
    "rolling_days_since_max",
    "rolling_days_since_min",
    "rolling_cov",
    "rolling_corr",
    "rolling_weighted_mean",
    "rolling_count",
    "rolling_sumif",
    "rolling_regbeta",
    "rolling_regresi",
    "rolling_regbeta_seq",
    "rolling_regresi_seq",
    "recursive_smooth",
]

for _name in KERNEL_NAMES:
    globals()[_name] = getattr(_impl, _name)

__all__ = KERNEL_NAMES + ["BACKEND", "KERNEL_NAMES", "get_backend"]


def get_backend(name: str):
    """Return a kernel namespace by name ("compiled" or "pure")."""
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
