"""Cross-sectional scoring: base factors plus a pluggable linear combiner.

The default combiner is ridge regression on pooled (date, instrument)
rows.  It sits behind a small model interface (fit/predict/records) so
a heavier learner can be swapped in without touching callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import FitError
from .panel import Panel, ReturnPanel, cross_sectional_zscore
from .records import stamp

BASE_FACTOR_NAMES = ("intraday_return", "daily_return", "rel_volume_20", "norm_range")

DEFAULT_RIDGE_LAMBDA = 1e-6


@dataclass(frozen=True)
class FeatureBlock:
    """Named (date x instrument) feature matrices, each cross-sectionally z-scored."""

    names: tuple[str, ...]
    matrices: dict[str, np.ndarray]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise FitError("duplicate feature names")
        shapes = {self.matrices[n].shape for n in self.names}
        if len(shapes) > 1:
            raise FitError(f"feature matrices disagree on shape: {shapes}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrices[self.names[0]].shape

    def with_feature(self, name: str, matrix: np.ndarray, zscore: bool = True) -> "FeatureBlock":
        if name in self.names:
            raise FitError(f"feature {name!r} already present")
        values = cross_sectional_zscore(matrix) if zscore else matrix
        return FeatureBlock(
            names=self.names + (name,), matrices={**self.matrices, name: values}
        )


def _delay(a: np.ndarray, n: int) -> np.ndarray:
    out = np.full(a.shape, np.nan)
    if n < a.shape[0]:
        out[n:] = a[:-n]
    return out


def base_factors(panel: Panel) -> FeatureBlock:
    """The four standing features every score model sees.

    intraday_return = close/open - 1
    daily_return    = close/delay(close, 1) - 1
    rel_volume_20   = volume / 20-day mean volume
    norm_range      = (high - low) / close

    Each is cross-sectionally z-scored.
    """
    s = panel.series
    with np.errstate(all="ignore"):
        intraday = s["close"] / s["open"] - 1.0
        daily = s["close"] / _delay(s["close"], 1) - 1.0
        rel_volume = s["volume"] / kernels.rolling_mean(s["volume"], 20)
        norm_range = (s["high"] - s["low"]) / s["close"]
    raw = {
        "intraday_return": intraday,
        "daily_return": daily,
        "rel_volume_20": rel_volume,
        "norm_range": norm_range,
    }
    matrices = {}
    for name, values in raw.items():
        values[~np.isfinite(values)] = np.nan
        matrices[name] = cross_sectional_zscore(values)
    return FeatureBlock(names=BASE_FACTOR_NAMES, matrices=matrices)


@dataclass(frozen=True)
class ScoreModel:
    kind: str  # "linear-ridge" or "single-factor"
    feature_names: tuple[str, ...]
    weights: tuple[float, ...]
    ridge_lambda: float

    def __post_init__(self):
        if self.kind == "linear-ridge" and len(self.weights) != len(self.feature_names):
            raise FitError("one weight per feature required")

    def to_record(self) -> dict:
        return stamp(
            {
                "kind": self.kind,
                "feature_names": list(self.feature_names),
                "weights": list(self.weights),
                "ridge_lambda": self.ridge_lambda,
            }
        )

    @staticmethod
    def from_record(record: dict) -> "ScoreModel":
        return ScoreModel(
            kind=record["kind"],
            feature_names=tuple(record["feature_names"]),
            weights=tuple(float(w) for w in record["weights"]),
            ridge_lambda=float(record["ridge_lambda"]),
        )


def fit(
    features: FeatureBlock,
    labels: ReturnPanel | np.ndarray,
    date_indices: np.ndarray,
    ridge_lambda: float = DEFAULT_RIDGE_LAMBDA,
) -> ScoreModel:
    """Ridge regression of pooled feature rows against z-scored labels.

    Only rows whose date lies in ``date_indices`` and whose features and
    label are all present enter the fit.  Labels are expected
    cross-sectionally z-scored already (callers own the normalization so
    the no-leakage poisoning check stays meaningful).
    """
    label_matrix = labels.values if isinstance(labels, ReturnPanel) else labels
    date_indices = np.asarray(date_indices, dtype=int)
    stack = np.stack([features.matrices[n][date_indices] for n in features.names], axis=-1)
    y_rows = label_matrix[date_indices]
    flat_x = stack.reshape(-1, len(features.names))
    flat_y = y_rows.reshape(-1)
    usable = ~np.isnan(flat_y) & ~np.isnan(flat_x).any(axis=1)
    flat_x = flat_x[usable]
    flat_y = flat_y[usable]
    n_features = len(features.names)
    if flat_x.shape[0] < n_features + 1:
        raise FitError(
            f"underdetermined fit: {flat_x.shape[0]} usable rows for {n_features} features"
        )
    gram = flat_x.T @ flat_x + ridge_lambda * np.eye(n_features)
    rhs = flat_x.T @ flat_y
    try:
        weights = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular system (try ridge_lambda > 0): {exc}") from exc
    return ScoreModel(
        kind="linear-ridge",
        feature_names=features.names,
        weights=tuple(float(w) for w in weights),
        ridge_lambda=ridge_lambda,
    )


def predict(
    model: ScoreModel, features: FeatureBlock, date_indices: np.ndarray | None = None
) -> np.ndarray:
    """Linear per-cell scores; missing wherever any contributing feature is
    missing; rows outside ``date_indices`` stay missing."""
    if model.feature_names != features.names:
        raise FitError(
            f"feature names {features.names} do not match model {model.feature_names}"
        )
    shape = features.shape
    scores = np.zeros(shape)
    missing = np.zeros(shape, dtype=bool)
    for name, weight in zip(model.feature_names, model.weights):
        matrix = features.matrices[name]
        missing |= np.isnan(matrix)
        scores = scores + weight * np.where(np.isnan(matrix), 0.0, matrix)
    scores[missing] = np.nan
    if date_indices is not None:
        mask = np.zeros(shape[0], dtype=bool)
        mask[np.asarray(date_indices, dtype=int)] = True
        scores[~mask] = np.nan
    return scores


def single_factor_model(name: str) -> ScoreModel:
    """Pass-through model: the score is the named feature itself."""
    return ScoreModel(
        kind="single-factor", feature_names=(name,), weights=(1.0,), ridge_lambda=0.0
    )


def predict_single(model: ScoreModel, features: FeatureBlock) -> np.ndarray:
    if model.kind != "single-factor":
        raise FitError("predict_single requires a single-factor model")
    name = model.feature_names[0]
    if name not in features.names:
        raise FitError(f"feature {name!r} not in block")
    return features.matrices[name].copy()
