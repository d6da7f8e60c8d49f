"""Aligned OHLCV panels: CSV ingestion, universe filtering, splits, labels.

A panel is an immutable (dates x instruments) grid of float64 matrices,
one per OHLCV field, with NaN as the explicit missing marker.  All
operations here are pure functions; panels are never mutated after
construction and are safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np

from .errors import CsvFormatError, EmptyUniverseError, PanelError, SplitError

FIELDS = ("open", "high", "low", "close", "volume")

DEFAULT_CSV_SCHEMA = {
    "date": "date",
    "symbol": "symbol",
    "open": "open",
    "high": "high",
    "low": "low",
    "close": "close",
    "volume": "volume",
}


@dataclass(frozen=True)
class Panel:
    """Aligned market data. ``series[field]`` is a (|dates|, |instruments|) matrix."""

    dates: tuple[Date, ...]
    instruments: tuple[str, ...]
    series: dict[str, np.ndarray]
    _date_index: dict[Date, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.dates or not self.instruments:
            raise PanelError("panel must have at least one date and one instrument")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise PanelError("dates must be strictly increasing without duplicates")
        shape = (len(self.dates), len(self.instruments))
        for name in FIELDS:
            if name not in self.series:
                raise PanelError(f"missing series {name!r}")
            if self.series[name].shape != shape:
                raise PanelError(
                    f"series {name!r} has shape {self.series[name].shape}, expected {shape}"
                )
        vol = self.series["volume"]
        if np.any(vol[~np.isnan(vol)] < 0):
            raise PanelError("volume values must be >= 0 where present")
        close = self.series["close"]
        dead = ~np.any(~np.isnan(close), axis=0)
        if np.any(dead):
            names = [self.instruments[i] for i in np.flatnonzero(dead)]
            raise PanelError(f"instruments with no close data: {names}")
        object.__setattr__(self, "_date_index", {d: i for i, d in enumerate(self.dates)})

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_instruments(self) -> int:
        return len(self.instruments)

    def date_index(self, d: Date) -> int:
        try:
            return self._date_index[d]
        except KeyError:
            raise PanelError(f"date {d.isoformat()} not in panel") from None

    def drop_leading_dates(self, count: int) -> "Panel":
        """Panel restricted to dates[count:]; used for shift-equivariance checks."""
        if not 0 <= count < self.n_dates:
            raise PanelError(f"cannot drop {count} of {self.n_dates} dates")
        return Panel(
            dates=self.dates[count:],
            instruments=self.instruments,
            series={k: v[count:].copy() for k, v in self.series.items()},
        )


def _parse_cell(raw: str | None, column: str, line: int) -> float:
    if raw is None or raw.strip() == "":
        return np.nan
    try:
        return float(raw)
    except ValueError:
        raise CsvFormatError(f"unparseable {column} value {raw!r}", line) from None


def ingest_csv(path: str | Path, schema: dict[str, str] | None = None) -> Panel:
    """Read an OHLCV CSV into an aligned panel.

    The file needs a header row; ``schema`` maps logical names (date,
    symbol, open, high, low, close, volume) to column names when the
    header differs from the default.  Cells missing from the file stay
    missing in the panel; extra columns are ignored.
    """
    schema = {**DEFAULT_CSV_SCHEMA, **(schema or {})}
    path = Path(path)
    if not path.exists():
        raise PanelError(f"no such file: {path}")

    cells: dict[tuple[Date, str], dict[str, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CsvFormatError("empty file", 1)
        for logical, column in schema.items():
            if column not in reader.fieldnames:
                raise CsvFormatError(f"missing required column {column!r} ({logical})", 1)
        for row in reader:
            line = reader.line_num
            raw_date = (row.get(schema["date"]) or "").strip()
            try:
                d = Date.fromisoformat(raw_date)
            except ValueError:
                raise CsvFormatError(f"unparseable date {raw_date!r}", line) from None
            symbol = (row.get(schema["symbol"]) or "").strip()
            if not symbol:
                raise CsvFormatError("empty symbol", line)
            key = (d, symbol)
            if key in cells:
                raise CsvFormatError(
                    f"duplicate (date, symbol) pair ({d.isoformat()}, {symbol})", line
                )
            cells[key] = {
                name: _parse_cell(row.get(schema[name]), name, line) for name in FIELDS
            }

    if not cells:
        raise CsvFormatError("file has no data rows", 2)
    dates = tuple(sorted({d for d, _ in cells}))
    instruments = tuple(sorted({s for _, s in cells}))
    date_pos = {d: i for i, d in enumerate(dates)}
    inst_pos = {s: j for j, s in enumerate(instruments)}
    series = {name: np.full((len(dates), len(instruments)), np.nan) for name in FIELDS}
    for (d, s), values in cells.items():
        i, j = date_pos[d], inst_pos[s]
        for name in FIELDS:
            series[name][i, j] = values[name]
    return Panel(dates=dates, instruments=instruments, series=series)


def export_csv(panel: Panel, path: str | Path) -> None:
    """Write the canonical CSV form; ``ingest_csv`` round-trips it exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", *FIELDS])
        for i, d in enumerate(panel.dates):
            for j, symbol in enumerate(panel.instruments):
                values = [panel.series[name][i, j] for name in FIELDS]
                if all(np.isnan(v) for v in values):
                    continue
                writer.writerow(
                    [d.isoformat(), symbol]
                    + ["" if np.isnan(v) else repr(float(v)) for v in values]
                )


def filter_universe(panel: Panel, min_days: int) -> Panel:
    """Keep instruments with at least ``min_days`` non-missing closes.

    The boundary is inclusive: exactly ``min_days`` closes is enough.
    The date axis is unchanged.  Idempotent for a fixed ``min_days``.
    """
    if min_days < 1:
        raise PanelError("min_days must be >= 1")
    counts = (~np.isnan(panel.series["close"])).sum(axis=0)
    keep = np.flatnonzero(counts >= min_days)
    if keep.size == 0:
        raise EmptyUniverseError(
            f"no instrument has {min_days} non-missing closes; universe is empty"
        )
    if keep.size == panel.n_instruments:
        return panel
    return Panel(
        dates=panel.dates,
        instruments=tuple(panel.instruments[j] for j in keep),
        series={k: v[:, keep].copy() for k, v in panel.series.items()},
    )


@dataclass(frozen=True)
class ReturnPanel:
    """Forward returns over ``horizon`` days; a label, never a feature.

    ``values[t, i]`` is close(t+horizon)/close(t) - 1, so it looks into
    the future by construction and must only ever be consumed as the
    prediction target.
    """

    horizon: int
    values: np.ndarray


def forward_returns(panel: Panel, horizon: int) -> ReturnPanel:
    if horizon < 1:
        raise PanelError("horizon must be >= 1")
    close = panel.series["close"]
    out = np.full(close.shape, np.nan)
    if horizon < close.shape[0]:
        now = close[:-horizon]
        future = close[horizon:]
        with np.errstate(all="ignore"):
            ratio = future / now - 1.0
        ratio[~np.isfinite(ratio)] = np.nan
        out[:-horizon] = ratio
    return ReturnPanel(horizon=horizon, values=out)


def cross_sectional_zscore(matrix: np.ndarray) -> np.ndarray:
    """Per-date z-score over non-missing entries (population std).

    Degenerate rows (fewer than two entries, or zero variance) map their
    non-missing cells to 0; missing cells stay missing.
    """
    a = np.asarray(matrix, dtype=np.float64)
    valid = ~np.isnan(a)
    m = valid.sum(axis=1)
    safe_m = np.maximum(m, 1)
    mean = np.where(valid, a, 0.0).sum(axis=1) / safe_m
    dev = np.where(valid, a - mean[:, None], 0.0)
    var = (dev * dev).sum(axis=1) / safe_m
    std = np.sqrt(var)
    degenerate = (m < 2) | (std == 0.0)
    with np.errstate(all="ignore"):
        z = dev / std[:, None]
    z[degenerate, :] = 0.0
    out = np.where(valid, z, np.nan)
    return out


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint, ordered train/validation/test date intervals (inclusive)."""

    train: tuple[Date, Date]
    validation: tuple[Date, Date]
    test: tuple[Date, Date]

    def __post_init__(self):
        for name, (lo, hi) in self.items():
            if lo > hi:
                raise SplitError(f"{name} interval has start after end")
        if not (self.train[1] < self.validation[0] and self.validation[1] < self.test[0]):
            raise SplitError("intervals must be disjoint and ordered train < validation < test")

    def items(self):
        return (
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        )

    def interval(self, which: str) -> tuple[Date, Date]:
        try:
            return dict(self.items())[which]
        except KeyError:
            raise SplitError(f"unknown split {which!r}") from None

    def mask(self, panel: Panel, which: str) -> np.ndarray:
        lo, hi = self.interval(which)
        return np.array([lo <= d <= hi for d in panel.dates], dtype=bool)

    def indices(self, panel: Panel, which: str) -> np.ndarray:
        idx = np.flatnonzero(self.mask(panel, which))
        if idx.size == 0:
            raise SplitError(f"{which} interval is empty within the panel's date range")
        return idx

    def validate_against(self, panel: Panel) -> None:
        for name, _ in self.items():
            self.indices(panel, name)

    @staticmethod
    def from_strings(
        train: tuple[str, str], validation: tuple[str, str], test: tuple[str, str]
    ) -> "SplitSpec":
        def iv(pair):
            return (Date.fromisoformat(pair[0]), Date.fromisoformat(pair[1]))

        return SplitSpec(train=iv(train), validation=iv(validation), test=iv(test))

    def to_record(self) -> dict:
        return {
            name: [lo.isoformat(), hi.isoformat()] for name, (lo, hi) in self.items()
        }

    @staticmethod
    def from_record(record: dict) -> "SplitSpec":
        return SplitSpec.from_strings(
            tuple(record["train"]), tuple(record["validation"]), tuple(record["test"])
        )
