"""Deterministic synthetic OHLCV panels with a planted, learnable signal.

The planted mechanism is a price-up/volume-down divergence: instruments
whose 5-day price change outruns their 5-day volume change revert over
the next day.  Cross-sectional forward returns are therefore a noisy
decreasing function of that divergence, which logic-guided factors can
recover.  Everything is seeded, so panels are byte-reproducible.
"""

from __future__ import annotations

from datetime import date as Date
from datetime import timedelta

import numpy as np

from .logic import MarketLogic, make_logic_id
from .panel import Panel, SplitSpec


def _cs_unit_rank(values: np.ndarray) -> np.ndarray:
    order = np.argsort(np.argsort(values))
    if values.size < 2:
        return np.full(values.shape, 0.5)
    return order / (values.size - 1.0)


def planted_divergence_panel(
    n_dates: int = 200,
    n_instruments: int = 60,
    seed: int = 7,
    signal_strength: float = 0.008,
    noise: float = 0.02,
    start: Date = Date(2020, 1, 1),
) -> Panel:
    rng = np.random.default_rng(seed)
    dates = tuple(start + timedelta(days=i) for i in range(n_dates))
    instruments = tuple(f"SYN{i:03d}" for i in range(n_instruments))

    log_volume = np.empty((n_dates, n_instruments))
    log_volume[0] = rng.normal(0.0, 0.3, n_instruments)
    for t in range(1, n_dates):
        log_volume[t] = 0.8 * log_volume[t - 1] + rng.normal(0.0, 0.35, n_instruments)
    volume = np.round(np.exp(log_volume) * 1e6, 2)

    close = np.empty((n_dates, n_instruments))
    close[0] = 100.0 * np.exp(rng.normal(0.0, 0.1, n_instruments))
    lag = 5
    for t in range(1, n_dates):
        drift = np.zeros(n_instruments)
        if t > lag:
            d_close = close[t - 1] / close[t - 1 - lag] - 1.0
            d_volume = volume[t - 1] / volume[t - 1 - lag] - 1.0
            divergence = _cs_unit_rank(d_close) - _cs_unit_rank(d_volume)
            drift = -signal_strength * 2.0 * divergence
        shock = rng.normal(0.0, noise, n_instruments)
        close[t] = close[t - 1] * (1.0 + drift + shock)

    open_ = np.empty_like(close)
    open_[0] = close[0] * (1.0 + rng.normal(0.0, 0.004, n_instruments))
    open_[1:] = close[:-1] * (1.0 + rng.normal(0.0, 0.004, (n_dates - 1, n_instruments)))
    spread = np.abs(rng.normal(0.0, 0.006, close.shape))
    high = np.maximum(open_, close) * (1.0 + spread)
    low = np.minimum(open_, close) * (1.0 - spread)

    return Panel(
        dates=dates,
        instruments=instruments,
        series={
            "open": open_,
            "high": high,
            "low": low,
            "close": close,
            "volume": volume,
        },
    )


def fractional_splits(
    panel: Panel, train_frac: float = 0.6, validation_frac: float = 0.2
) -> SplitSpec:
    """Contiguous splits over the panel's date axis by fraction."""
    n = panel.n_dates
    train_end = max(1, int(n * train_frac)) - 1
    val_end = max(train_end + 2, int(n * (train_frac + validation_frac))) - 1
    if val_end + 1 >= n:
        raise ValueError("panel too short for the requested split fractions")
    return SplitSpec(
        train=(panel.dates[0], panel.dates[train_end]),
        validation=(panel.dates[train_end + 1], panel.dates[val_end]),
        test=(panel.dates[val_end + 1], panel.dates[-1]),
    )


def seed_library() -> list[MarketLogic]:
    """Two deterministic starting logics for demos and end-to-end runs."""
    entries = [
        (
            "price-volume divergence reversal",
            "When recent price gains are not confirmed by rising volume over the "
            "same window, the move is likely sentiment-driven and fragile.",
            "Expected forward return over the next day is negative for such "
            "instruments (direction -1, horizon 1 day).",
        ),
        (
            "volume-backed continuation",
            "When price strength comes with expanding participation (rising "
            "volume over the past week), information is being absorbed.",
            "Expected forward return over the next day is positive (direction "
            "+1, horizon 1 day).",
        ),
    ]
    library = []
    for title, c_text, b_text in entries:
        logic_text = f"{title}: {c_text} {b_text}"
        library.append(
            MarketLogic(
                id=make_logic_id("seed", logic_text),
                provenance="mined",
                logic_text=logic_text,
                c_text=c_text,
                b_text=b_text,
            )
        )
    return library
