from datetime import date, timedelta

import numpy as np
import pytest

from alphaloom.panel import Panel
from alphaloom.synthetic import fractional_splits, planted_divergence_panel


def make_panel(closes, opens=None, highs=None, lows=None, volumes=None, start=date(2021, 1, 4)):
    """Build a panel from a (dates x instruments) close matrix; other
    fields default to plausible transforms of close."""
    closes = np.asarray(closes, dtype=float)
    if closes.ndim == 1:
        closes = closes[:, None]
    T, N = closes.shape
    opens = np.asarray(opens, dtype=float) if opens is not None else closes * 0.99
    highs = np.asarray(highs, dtype=float) if highs is not None else np.fmax(closes, opens) * 1.01
    lows = np.asarray(lows, dtype=float) if lows is not None else np.fmin(closes, opens) * 0.99
    volumes = (
        np.asarray(volumes, dtype=float)
        if volumes is not None
        else np.full((T, N), 1000.0)
    )
    for m in (opens, highs, lows, volumes):
        assert m.shape == (T, N)
    return Panel(
        dates=tuple(start + timedelta(days=i) for i in range(T)),
        instruments=tuple(f"I{j:02d}" for j in range(N)),
        series={
            "open": opens.copy(),
            "high": highs.copy(),
            "low": lows.copy(),
            "close": closes.copy(),
            "volume": volumes.copy(),
        },
    )


def random_panel(seed: int, n_dates: int = 60, n_instruments: int = 30, missing: float = 0.03):
    """Random lognormal panel with scattered missing cells (close kept
    dense enough for the panel invariant)."""
    rng = np.random.default_rng(seed)
    close = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, (n_dates, n_instruments)), axis=0))
    open_ = close * (1 + rng.normal(0, 0.005, close.shape))
    spread = np.abs(rng.normal(0, 0.008, close.shape))
    high = np.maximum(open_, close) * (1 + spread)
    low = np.minimum(open_, close) * (1 - spread)
    volume = np.exp(rng.normal(0, 0.5, close.shape)) * 1e6
    series = {"open": open_, "high": high, "low": low, "close": close, "volume": volume}
    if missing:
        for name, matrix in series.items():
            mask = rng.random(matrix.shape) < missing
            if name == "close":
                mask[0] = False  # keep every instrument alive
            matrix[mask] = np.nan
    return Panel(
        dates=tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(n_dates)),
        instruments=tuple(f"R{j:03d}" for j in range(n_instruments)),
        series=series,
    )


@pytest.fixture(scope="session")
def synth_panel():
    return planted_divergence_panel()


@pytest.fixture(scope="session")
def synth_splits(synth_panel):
    return fractional_splits(synth_panel)


@pytest.fixture()
def rand_panel():
    return random_panel(seed=11)
