"""The operator catalogue: every legal operator, its family, its slots.

Slot kinds drive validation: ``series``/``condition`` slots accept any
sub-expression, the integer slots (window, lag, period, degree,
modifier) require literal integers >= 1, and ``quantile`` requires a
literal strictly inside (0, 1).  ``MAX``/``MIN`` and ``PERCENTILE`` are
overloaded by arity (cross-sectional single-series form vs the binary /
rolling form).
"""

from __future__ import annotations

from dataclasses import dataclass

# slot kinds
SERIES = "series"
CONDITION = "condition"
WINDOW = "window"
LAG = "lag"
PERIOD = "period"
QUANTILE = "quantile"
MODIFIER = "modifier"
DEGREE = "degree"

INT_SLOTS = frozenset({WINDOW, LAG, PERIOD, MODIFIER, DEGREE})
DATA_SLOTS = frozenset({SERIES, CONDITION})

# operator families
ARITHMETIC = "arithmetic"
CROSS_SECTIONAL = "cross_sectional"
TS_AGGREGATION = "time_series_aggregation"
TS_CHANGE = "time_series_change"
TS_RELATION = "time_series_relation"
SMOOTHING = "smoothing_decay"
MATHEMATICAL = "mathematical"
CONDITIONAL_LOGICAL = "conditional_logical"
REGRESSION = "regression"
TECHNICAL = "technical_indicators"

FAMILIES = (
    ARITHMETIC,
    CROSS_SECTIONAL,
    TS_AGGREGATION,
    TS_CHANGE,
    TS_RELATION,
    SMOOTHING,
    MATHEMATICAL,
    CONDITIONAL_LOGICAL,
    REGRESSION,
    TECHNICAL,
)

# families admissible in any constraint set as composition glue
GLUE_FAMILIES = frozenset({ARITHMETIC, MATHEMATICAL})

VARIABLES = ("open", "high", "low", "close", "volume", "return")


@dataclass(frozen=True)
class Signature:
    name: str
    family: str
    slots: tuple[str, ...]
    output: str = "value"  # "value" or "condition"

    @property
    def arity(self) -> int:
        return len(self.slots)


_SIGNATURES = [
    # arithmetic (infix sugar included so family checks see canonical names)
    Signature("ADD", ARITHMETIC, (SERIES, SERIES)),
    Signature("SUB", ARITHMETIC, (SERIES, SERIES)),
    Signature("MUL", ARITHMETIC, (SERIES, SERIES)),
    Signature("DIV", ARITHMETIC, (SERIES, SERIES)),
    Signature("NEG", ARITHMETIC, (SERIES,)),
    # cross-sectional
    Signature("RANK", CROSS_SECTIONAL, (SERIES,)),
    Signature("ZSCORE", CROSS_SECTIONAL, (SERIES,)),
    Signature("MEAN", CROSS_SECTIONAL, (SERIES,)),
    Signature("STD", CROSS_SECTIONAL, (SERIES,)),
    Signature("SKEW", CROSS_SECTIONAL, (SERIES,)),
    Signature("KURT", CROSS_SECTIONAL, (SERIES,)),
    Signature("MAX", CROSS_SECTIONAL, (SERIES,)),
    Signature("MIN", CROSS_SECTIONAL, (SERIES,)),
    Signature("MEDIAN", CROSS_SECTIONAL, (SERIES,)),
    Signature("PERCENTILE", CROSS_SECTIONAL, (SERIES, QUANTILE)),
    # time-series change
    Signature("DELTA", TS_CHANGE, (SERIES, LAG)),
    Signature("DELAY", TS_CHANGE, (SERIES, LAG)),
    Signature("TS_PCTCHANGE", TS_CHANGE, (SERIES, PERIOD)),
    # time-series aggregation
    Signature("TS_MEAN", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_SUM", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_MIN", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_MAX", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_MEDIAN", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_STD", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_VAR", TS_AGGREGATION, (SERIES, PERIOD)),
    Signature("TS_MAD", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_RANK", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_ZSCORE", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_QUANTILE", TS_AGGREGATION, (SERIES, PERIOD, QUANTILE)),
    Signature("PERCENTILE", TS_AGGREGATION, (SERIES, QUANTILE, PERIOD)),
    Signature("TS_ARGMAX", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("TS_ARGMIN", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("HIGHDAY", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("LOWDAY", TS_AGGREGATION, (SERIES, WINDOW)),
    Signature("SUMAC", TS_AGGREGATION, (SERIES, WINDOW)),
    # rolling product aggregates a window, so it lives here rather than
    # with the pointwise mathematical operators
    Signature("PROD", TS_AGGREGATION, (SERIES, WINDOW)),
    # time-series relation
    Signature("TS_CORR", TS_RELATION, (SERIES, SERIES, WINDOW)),
    Signature("TS_COVARIANCE", TS_RELATION, (SERIES, SERIES, WINDOW)),
    # smoothing / decay
    Signature("SMA", SMOOTHING, (SERIES, WINDOW, MODIFIER)),
    Signature("WMA", SMOOTHING, (SERIES, WINDOW)),
    Signature("EMA", SMOOTHING, (SERIES, WINDOW)),
    Signature("DECAYLINEAR", SMOOTHING, (SERIES, WINDOW)),
    # mathematical
    Signature("LOG", MATHEMATICAL, (SERIES,)),
    Signature("SQRT", MATHEMATICAL, (SERIES,)),
    Signature("POW", MATHEMATICAL, (SERIES, DEGREE)),
    Signature("SIGN", MATHEMATICAL, (SERIES,)),
    Signature("EXP", MATHEMATICAL, (SERIES,)),
    Signature("ABS", MATHEMATICAL, (SERIES,)),
    Signature("MAX", MATHEMATICAL, (SERIES, SERIES)),
    Signature("MIN", MATHEMATICAL, (SERIES, SERIES)),
    Signature("INV", MATHEMATICAL, (SERIES,)),
    Signature("FLOOR", MATHEMATICAL, (SERIES,)),
    # conditional / logical
    Signature("COUNT", CONDITIONAL_LOGICAL, (CONDITION, WINDOW)),
    Signature("SUMIF", CONDITIONAL_LOGICAL, (SERIES, WINDOW, CONDITION)),
    Signature("FILTER", CONDITIONAL_LOGICAL, (SERIES, CONDITION)),
    Signature("AND", CONDITIONAL_LOGICAL, (CONDITION, CONDITION), output="condition"),
    Signature("OR", CONDITIONAL_LOGICAL, (CONDITION, CONDITION), output="condition"),
    Signature("IFELSE", CONDITIONAL_LOGICAL, (CONDITION, SERIES, SERIES)),
    Signature("GT", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    Signature("LT", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    Signature("GE", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    Signature("LE", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    Signature("EQ", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    Signature("NE", CONDITIONAL_LOGICAL, (SERIES, SERIES), output="condition"),
    # regression / residual
    Signature("SEQUENCE", REGRESSION, (WINDOW,)),
    Signature("REGBETA", REGRESSION, (SERIES, SERIES, WINDOW)),
    Signature("REGRESI", REGRESSION, (SERIES, SERIES, WINDOW)),
    # technical indicators
    Signature("RSI", TECHNICAL, (SERIES, WINDOW)),
    Signature("MACD", TECHNICAL, (SERIES, WINDOW, WINDOW)),
    Signature("BB_MIDDLE", TECHNICAL, (SERIES, WINDOW)),
    Signature("BB_UPPER", TECHNICAL, (SERIES, WINDOW)),
    Signature("BB_LOWER", TECHNICAL, (SERIES, WINDOW)),
]


class OperatorCatalogue:
    """Immutable registry; lookups resolve overloads by arity."""

    def __init__(self, signatures):
        self._by_name: dict[str, dict[int, Signature]] = {}
        for sig in signatures:
            self._by_name.setdefault(sig.name, {})[sig.arity] = sig

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_name))

    def arities(self, name: str) -> tuple[int, ...]:
        return tuple(sorted(self._by_name[name]))

    def lookup(self, name: str, nargs: int) -> Signature | None:
        return self._by_name.get(name, {}).get(nargs)

    def signatures(self):
        for arities in self._by_name.values():
            yield from arities.values()

    def members_of(self, family: str) -> tuple[str, ...]:
        return tuple(
            sorted({s.name for s in self.signatures() if s.family == family})
        )


CATALOGUE = OperatorCatalogue(_SIGNATURES)
