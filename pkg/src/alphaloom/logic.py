"""Market logic in its three forms and the deterministic constraint compiler.

A logic exists as (1) human-readable text, (2) a canonical structured
record (a Boolean condition formula over typed predicates plus a
directional prediction), and (3) a compiled constraint set that limits
which variables, operator families and parameter ranges a generated
factor expression may use.  Compilation is a fixed rule table:

    predicate op class   families added
    -----------------   --------------------------------------------
    trend               time-series change, time-series aggregation
    level               cross-sectional
    relation            time-series relation
    oscillator          technical indicators
    slope               regression

    plus smoothing/decay when any predicate window exceeds 1 day,
    plus time-series relation and cross-sectional when the condition
    spans two or more distinct variable kinds (cross-variable
    conditions need co-movement and normalization machinery),
    plus conditional/logical when the condition formula uses OR/NOT.

Arithmetic and mathematical operators are always admissible as glue.
Thresholds (theta) are carried as opaque tokens for prompting and are
never evaluated numerically.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .dsl.ast import Call, Const, Node, Var
from .dsl.catalogue import (
    CATALOGUE,
    CONDITIONAL_LOGICAL,
    CROSS_SECTIONAL,
    GLUE_FAMILIES,
    INT_SLOTS,
    REGRESSION,
    SMOOTHING,
    TECHNICAL,
    TS_AGGREGATION,
    TS_CHANGE,
    TS_RELATION,
)
from .dsl.parser import unparse
from .dsl.ast import FactorExpr
from .errors import CanonicalizationError, CompileError, RecordError
from .records import dumps_canonical, loads_record, stamp

PROVENANCES = ("mined", "generated", "refined")

_VAR_KIND = {
    "open": "price",
    "high": "price",
    "low": "price",
    "close": "price",
    "price": "price",
    "volume": "volume",
    "return": "return",
}

_KIND_VARIABLES = {
    "price": frozenset({"open", "high", "low", "close"}),
    "volume": frozenset({"volume"}),
    "return": frozenset({"close", "return"}),
}

_VARIABLE_SYNONYMS = {
    "price": "price",
    "prices": "price",
    "px": "price",
    "open": "open",
    "open_price": "open",
    "opening_price": "open",
    "high": "high",
    "high_price": "high",
    "intraday_high": "high",
    "low": "low",
    "low_price": "low",
    "intraday_low": "low",
    "close": "close",
    "close_price": "close",
    "closing_price": "close",
    "volume": "volume",
    "volumes": "volume",
    "vol": "volume",
    "turnover": "volume",
    "trading_volume": "volume",
    "return": "return",
    "returns": "return",
    "ret": "return",
    "forward_return": "return",
}

_OP_SYNONYMS = {
    "trend_up": "trend_up",
    "rises": "trend_up",
    "rising": "trend_up",
    "increases": "trend_up",
    "increasing": "trend_up",
    "uptrend": "trend_up",
    "up": "trend_up",
    "trend_down": "trend_down",
    "falls": "trend_down",
    "falling": "trend_down",
    "decreases": "trend_down",
    "decreasing": "trend_down",
    "declines": "trend_down",
    "declining": "trend_down",
    "shrinks": "trend_down",
    "shrinking": "trend_down",
    "downtrend": "trend_down",
    "down": "trend_down",
    "trend_not_up": "trend_not_up",
    "not_up": "trend_not_up",
    "not_rising": "trend_not_up",
    "stagnant_or_down": "trend_not_up",
    "trend_not_down": "trend_not_down",
    "not_down": "trend_not_down",
    "not_falling": "trend_not_down",
    "above": "above",
    "exceeds": "above",
    "greater_than": "above",
    "gt": "above",
    "below": "below",
    "less_than": "below",
    "lt": "below",
    "crosses_above": "crosses_above",
    "crosses_below": "crosses_below",
    "at_high": "at_high",
    "near_high": "at_high",
    "high_level": "at_high",
    "at_low": "at_low",
    "near_low": "at_low",
    "low_level": "at_low",
    "diverges_from": "diverges_from",
    "diverges": "diverges_from",
    "divergence": "diverges_from",
    "decouples_from": "diverges_from",
    "correlates_with": "correlates_with",
    "co_moves_with": "correlates_with",
    "comoves_with": "correlates_with",
    "converges_with": "correlates_with",
    "confirms": "correlates_with",
    "overbought": "overbought",
    "oversold": "oversold",
    "mean_reverts": "mean_reverts",
    "reverts": "mean_reverts",
    "slope_up": "slope_up",
    "slope_down": "slope_down",
}

_OP_CLASS = {
    "trend_up": "trend",
    "trend_down": "trend",
    "trend_not_up": "trend",
    "trend_not_down": "trend",
    "above": "level",
    "below": "level",
    "crosses_above": "level",
    "crosses_below": "level",
    "at_high": "level",
    "at_low": "level",
    "diverges_from": "relation",
    "correlates_with": "relation",
    "overbought": "oscillator",
    "oversold": "oscillator",
    "mean_reverts": "oscillator",
    "slope_up": "slope",
    "slope_down": "slope",
}

_CLASS_FAMILIES = {
    "trend": frozenset({TS_CHANGE, TS_AGGREGATION}),
    "level": frozenset({CROSS_SECTIONAL}),
    "relation": frozenset({TS_RELATION}),
    "oscillator": frozenset({TECHNICAL}),
    "slope": frozenset({REGRESSION}),
}

_POSITIVE_D = {"+1", "1", "positive", "pos", "up", "long", "bullish"}
_NEGATIVE_D = {"-1", "negative", "neg", "down", "short", "bearish"}

_TARGET_SYNONYMS = {
    "forward_return",
    "return",
    "returns",
    "future_return",
    "next_period_return",
    "next_day_return",
    "fwd_return",
    "expected_return",
    "forward_returns",
    "price_return",
}


def make_logic_id(prefix: str, *texts: str) -> str:
    digest = hashlib.sha1("\x1f".join(texts).encode("utf-8")).hexdigest()
    return f"{prefix}-{digest[:10]}"


@dataclass(frozen=True)
class MarketLogic:
    """Human-readable logic: a condition narrative paired with a prediction."""

    id: str
    provenance: str
    logic_text: str
    c_text: str
    b_text: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise CanonicalizationError(f"provenance must be one of {PROVENANCES}")
        for name in ("logic_text", "c_text", "b_text"):
            if not getattr(self, name).strip():
                raise CanonicalizationError(f"{name} must be non-empty")

    def to_record(self) -> dict:
        return stamp(
            {
                "id": self.id,
                "provenance": self.provenance,
                "logic_text": self.logic_text,
                "c_text": self.c_text,
                "b_text": self.b_text,
            }
        )

    @staticmethod
    def from_record(record: dict) -> "MarketLogic":
        return MarketLogic(
            id=record["id"],
            provenance=record["provenance"],
            logic_text=record["logic_text"],
            c_text=record["c_text"],
            b_text=record["b_text"],
        )


@dataclass(frozen=True)
class Predicate:
    id: str
    v: str
    op: str
    theta: str
    w: int

    def __post_init__(self):
        if not self.id:
            raise CanonicalizationError("predicate id must be non-empty")
        if self.w < 1:
            raise CanonicalizationError(f"predicate {self.id}: window must be >= 1")
        if self.v not in _VAR_KIND:
            raise CanonicalizationError(
                f"predicate {self.id}: variable {self.v!r} not in the recognized vocabulary"
            )


@dataclass(frozen=True)
class Prediction:
    """The B side: target name, direction (+1/-1) and horizon in days."""

    y: str
    d: int
    h: int

    def __post_init__(self):
        if self.d not in (1, -1):
            raise CanonicalizationError(f"direction must be +1 or -1, got {self.d}")
        if self.h < 1:
            raise CanonicalizationError(f"horizon must be >= 1, got {self.h}")


# --- Boolean condition formulas -------------------------------------------

_FORMULA_TOKEN = re.compile(r"\(|\)|[A-Za-z_][A-Za-z0-9_]*")


def _parse_formula(text: str):
    tokens = _FORMULA_TOKEN.findall(text)
    if "".join(_FORMULA_TOKEN.sub("", text).split()) != "":
        raise CanonicalizationError(f"formula has illegal characters: {text!r}")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def advance():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def or_():
        node = and_()
        while peek() is not None and peek().upper() == "OR":
            advance()
            node = ("or", node, and_())
        return node

    def and_():
        node = unary()
        while peek() is not None and peek().upper() == "AND":
            advance()
            node = ("and", node, unary())
        return node

    def unary():
        tok = peek()
        if tok is None:
            raise CanonicalizationError(f"formula ends unexpectedly: {text!r}")
        if tok.upper() == "NOT":
            advance()
            return ("not", unary())
        if tok == "(":
            advance()
            node = or_()
            if peek() != ")":
                raise CanonicalizationError(f"unbalanced parentheses in formula: {text!r}")
            advance()
            return node
        if tok == ")":
            raise CanonicalizationError(f"unbalanced parentheses in formula: {text!r}")
        advance()
        return ("pred", tok)

    node = or_()
    if pos != len(tokens):
        raise CanonicalizationError(f"trailing tokens in formula: {text!r}")
    return node


def _print_formula(node) -> str:
    kind = node[0]
    if kind == "pred":
        return node[1]
    if kind == "not":
        return f"NOT {_print_formula(node[1])}"
    left, right = _print_formula(node[1]), _print_formula(node[2])
    return f"({left} {kind.upper()} {right})"


def _formula_ids(node, out: set[str]) -> None:
    if node[0] == "pred":
        out.add(node[1])
    elif node[0] == "not":
        _formula_ids(node[1], out)
    else:
        _formula_ids(node[1], out)
        _formula_ids(node[2], out)


def _formula_connectives(node, out: set[str]) -> None:
    if node[0] in ("and", "or", "not"):
        out.add(node[0])
        for child in node[1:]:
            _formula_connectives(child, out)


@dataclass(frozen=True)
class MarketLogicStruct:
    """Canonical structured logic: formula over predicates plus prediction."""

    formula: str
    predicates: tuple[Predicate, ...]
    b: Prediction

    def __post_init__(self):
        if not self.predicates:
            raise CanonicalizationError("structured logic needs at least one predicate")
        ids = [p.id for p in self.predicates]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise CanonicalizationError(f"duplicate predicate ids: {dupes}")
        tree = _parse_formula(self.formula)
        referenced: set[str] = set()
        _formula_ids(tree, referenced)
        unknown = referenced - set(ids)
        if unknown:
            raise CanonicalizationError(f"formula references unknown predicates: {sorted(unknown)}")

    def to_record(self) -> dict:
        return {
            "C": {
                "formula": self.formula,
                "predicates": [
                    {"id": p.id, "v": p.v, "op": p.op, "theta": p.theta, "w": p.w}
                    for p in self.predicates
                ],
            },
            "B": {"y": self.b.y, "d": self.b.d, "h": self.b.h},
        }

    @staticmethod
    def from_record(record: dict) -> "MarketLogicStruct":
        if "C" not in record or "B" not in record:
            raise RecordError("structured logic record needs C and B")
        c, b = record["C"], record["B"]
        return MarketLogicStruct(
            formula=c["formula"],
            predicates=tuple(
                Predicate(id=p["id"], v=p["v"], op=p["op"], theta=p.get("theta", ""), w=int(p["w"]))
                for p in c["predicates"]
            ),
            b=Prediction(y=b["y"], d=int(b["d"]), h=int(b["h"])),
        )


def _norm_token(raw) -> str:
    text = str(raw).strip().lower()
    text = re.sub(r"[^a-z0-9]+", "_", text).strip("_")
    return text


def _canon_direction(raw) -> int:
    if raw is None:
        raise CanonicalizationError("B.d (direction) is required")
    if isinstance(raw, (int, float)) and raw in (1, -1):
        return int(raw)
    token = _norm_token(raw).lstrip("_")
    if str(raw).strip() in ("+1", "1", "-1"):
        token = str(raw).strip()
    if token in _POSITIVE_D:
        return 1
    if token in _NEGATIVE_D:
        return -1
    raise CanonicalizationError(f"cannot interpret direction {raw!r}")


def canonicalize_fields(raw: dict) -> MarketLogicStruct:
    """Normalize agent-produced structured logic into the canonical form.

    Variable and op synonyms map to the fixed vocabulary, missing
    windows and horizons default to 1 day, and the direction is coerced
    to +/-1.  The function is idempotent on its own output.
    """
    if not isinstance(raw, dict):
        raise CanonicalizationError("structured logic must be an object")
    if "H_struct" in raw:
        raw = raw["H_struct"]
    c = raw.get("C") or {}
    b = raw.get("B")
    if b is None:
        raise CanonicalizationError("structured logic is missing B")

    predicates = []
    for entry in c.get("predicates", []):
        pid = str(entry.get("id") or "").strip()
        if not pid:
            raise CanonicalizationError("predicate without an id")
        v_token = _norm_token(entry.get("v"))
        v = _VARIABLE_SYNONYMS.get(v_token)
        if v is None:
            raise CanonicalizationError(
                f"predicate {pid}: unrecognized variable {entry.get('v')!r}"
            )
        op_token = _norm_token(entry.get("op"))
        op = _OP_SYNONYMS.get(op_token, op_token)
        theta = str(entry.get("theta") or "").strip()
        w_raw = entry.get("w")
        if w_raw in (None, ""):
            w = 1
        else:
            try:
                w = int(w_raw)
            except (TypeError, ValueError):
                raise CanonicalizationError(f"predicate {pid}: bad window {w_raw!r}") from None
        predicates.append(Predicate(id=pid, v=v, op=op, theta=theta, w=w))
    if not predicates:
        raise CanonicalizationError("structured logic has no predicates")

    formula_text = str(c.get("formula") or "").strip()
    if not formula_text:
        formula_text = " AND ".join(p.id for p in predicates)
    formula = _print_formula(_parse_formula(formula_text))

    y_token = _norm_token(b.get("y") or "forward_return")
    if y_token not in _TARGET_SYNONYMS:
        raise CanonicalizationError(f"B.y names no computable target: {b.get('y')!r}")
    d = _canon_direction(b.get("d"))
    h_raw = b.get("h")
    h = 1 if h_raw in (None, "") else int(h_raw)

    return MarketLogicStruct(
        formula=formula,
        predicates=tuple(predicates),
        b=Prediction(y="forward_return", d=d, h=h),
    )


# --- Compiled constraint sets ----------------------------------------------


@dataclass(frozen=True)
class ParamRule:
    """Hard lower bound plus an advisory (never enforced) window range."""

    minimum: int = 1
    advised: tuple[int, int] | None = None

    def to_record(self):
        return {
            "minimum": self.minimum,
            "advised": list(self.advised) if self.advised else None,
        }


@dataclass(frozen=True)
class ConstraintSet:
    allowed_variables: frozenset[str]
    operator_families: frozenset[str]
    parameter_constraints: dict[str, ParamRule]
    direction: Prediction

    def __post_init__(self):
        if not self.allowed_variables:
            raise CompileError("constraint set with no allowed variables")
        for family in self.operator_families:
            if not CATALOGUE.members_of(family):
                raise CompileError(f"operator family {family!r} has no catalogue members")

    def to_record(self) -> dict:
        return {
            "allowed_variables": sorted(self.allowed_variables),
            "operator_families": sorted(self.operator_families),
            "parameter_constraints": {
                k: v.to_record() for k, v in sorted(self.parameter_constraints.items())
            },
            "direction": {"y": self.direction.y, "d": self.direction.d, "h": self.direction.h},
        }

    @staticmethod
    def from_record(record: dict) -> "ConstraintSet":
        rules = {}
        for name, rule in record["parameter_constraints"].items():
            advised = rule.get("advised")
            rules[name] = ParamRule(
                minimum=int(rule["minimum"]),
                advised=tuple(advised) if advised else None,
            )
        d = record["direction"]
        return ConstraintSet(
            allowed_variables=frozenset(record["allowed_variables"]),
            operator_families=frozenset(record["operator_families"]),
            parameter_constraints=rules,
            direction=Prediction(y=d["y"], d=int(d["d"]), h=int(d["h"])),
        )

    def to_payload(self) -> dict:
        """Wire-format rendering used in generation prompts."""
        preference = "negative" if self.direction.d == -1 else "positive"
        constraints = {}
        for name, rule in sorted(self.parameter_constraints.items()):
            text = "positive integer"
            if rule.advised:
                text += f", suggested {rule.advised[0]}..{rule.advised[1]}"
            constraints[name] = text
        return {
            "allowed_variables": sorted(self.allowed_variables),
            "operator_families": sorted(self.operator_families),
            "parameter_constraints": constraints,
            "direction_constraint": (
                f"prefer factors with {preference} IC on validation data "
                f"(target {self.direction.y}, horizon {self.direction.h})"
            ),
        }


def compile_constraints(h_struct: MarketLogicStruct) -> ConstraintSet:
    """Deterministic mapping from structured logic to generation constraints."""
    variables: set[str] = set()
    families: set[str] = set()
    kinds: set[str] = set()
    for p in h_struct.predicates:
        kind = _VAR_KIND.get(p.v)
        if kind is None:
            raise CompileError(f"predicate {p.id}: unrecognized variable {p.v!r}")
        op = _OP_SYNONYMS.get(_norm_token(p.op))
        cls = _OP_CLASS.get(op) if op else None
        if cls is None:
            raise CompileError(f"predicate {p.id}: unrecognized op token {p.op!r}")
        kinds.add(kind)
        variables |= _KIND_VARIABLES[kind]
        families |= _CLASS_FAMILIES[cls]
    if len(kinds) >= 2:
        families |= {TS_RELATION, CROSS_SECTIONAL}
    if any(p.w > 1 for p in h_struct.predicates):
        families |= {SMOOTHING}
    connectives: set[str] = set()
    _formula_connectives(_parse_formula(h_struct.formula), connectives)
    if connectives & {"or", "not"}:
        families |= {CONDITIONAL_LOGICAL}

    w_max = max(p.w for p in h_struct.predicates)
    advised = None if w_max <= 1 else (max(1, w_max // 2), 2 * w_max)
    rules = {
        "window": ParamRule(minimum=1, advised=advised),
        "lag": ParamRule(minimum=1, advised=None),
    }
    return ConstraintSet(
        allowed_variables=frozenset(variables),
        operator_families=frozenset(families),
        parameter_constraints=rules,
        direction=h_struct.b,
    )


# --- Conformance checking ---------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str  # "variable" | "operator_family" | "parameter"
    location: str  # offending sub-expression in canonical text
    message: str


@dataclass(frozen=True)
class CheckReport:
    ok: bool
    violations: tuple[Violation, ...] = field(default=())


_SLOT_RULE = {"window": "window", "period": "window", "lag": "lag"}


def check(expr: FactorExpr, gamma: ConstraintSet) -> CheckReport:
    """Report every constraint violation; never raises on violations."""
    violations: list[Violation] = []
    _check_node(expr.root, gamma, violations)
    return CheckReport(ok=not violations, violations=tuple(violations))


def _check_node(node: Node, gamma: ConstraintSet, out: list[Violation]) -> None:
    if isinstance(node, Var):
        if node.name not in gamma.allowed_variables:
            out.append(
                Violation(
                    rule="variable",
                    location=node.name,
                    message=f"variable {node.name!r} outside allowed set "
                    f"{sorted(gamma.allowed_variables)}",
                )
            )
        return
    if isinstance(node, Const):
        return
    assert isinstance(node, Call)
    sig = CATALOGUE.lookup(node.op, len(node.args))
    allowed = gamma.operator_families | GLUE_FAMILIES
    if sig.family not in allowed:
        out.append(
            Violation(
                rule="operator_family",
                location=unparse(FactorExpr(root=node)),
                message=f"operator {node.op} (family {sig.family}) outside allowed families "
                f"{sorted(gamma.operator_families)}",
            )
        )
    for slot, arg in zip(sig.slots, node.args):
        if slot in INT_SLOTS and isinstance(arg, Const):
            rule = gamma.parameter_constraints.get(_SLOT_RULE.get(slot, slot))
            minimum = rule.minimum if rule else 1
            if arg.value < minimum:
                out.append(
                    Violation(
                        rule="parameter",
                        location=unparse(FactorExpr(root=node)),
                        message=f"{node.op}: {slot} {arg.value} below minimum {minimum}",
                    )
                )
        elif slot not in INT_SLOTS and slot != "quantile":
            _check_node(arg, gamma, out)


# --- Records and library files ----------------------------------------------


def logic_to_record(
    logic: MarketLogic,
    h_struct: MarketLogicStruct | None = None,
    gamma: ConstraintSet | None = None,
) -> dict:
    record = logic.to_record()
    if h_struct is not None:
        record["H_struct"] = h_struct.to_record()
    if gamma is not None:
        record["Gamma"] = gamma.to_record()
    return record


def logic_from_record(record: dict):
    logic = MarketLogic.from_record(record)
    h_struct = (
        MarketLogicStruct.from_record(record["H_struct"]) if "H_struct" in record else None
    )
    gamma = ConstraintSet.from_record(record["Gamma"]) if "Gamma" in record else None
    return logic, h_struct, gamma


def serialize(obj) -> str:
    """Canonical one-line text record for any logic-layer value."""
    if isinstance(obj, MarketLogic):
        return dumps_canonical(obj.to_record())
    if isinstance(obj, MarketLogicStruct):
        return dumps_canonical(stamp({"H_struct": obj.to_record()}))
    if isinstance(obj, ConstraintSet):
        return dumps_canonical(stamp({"Gamma": obj.to_record()}))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def deserialize(text: str):
    record = loads_record(text)
    if "H_struct" in record and "id" not in record:
        return MarketLogicStruct.from_record(record["H_struct"])
    if "Gamma" in record and "id" not in record:
        return ConstraintSet.from_record(record["Gamma"])
    for name in ("id", "provenance", "logic_text", "c_text", "b_text"):
        if name not in record:
            raise RecordError(f"record missing required field {name!r}")
    return MarketLogic.from_record(record)


def save_library(path, entries) -> None:
    """Write a logic library: one canonical record per line.

    ``entries`` holds (logic, h_struct | None, gamma | None) triples or
    bare MarketLogic values.
    """
    lines = []
    for entry in entries:
        if isinstance(entry, MarketLogic):
            lines.append(dumps_canonical(logic_to_record(entry)))
        else:
            logic, h_struct, gamma = entry
            lines.append(dumps_canonical(logic_to_record(logic, h_struct, gamma)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_library(path) -> list[tuple[MarketLogic, MarketLogicStruct | None, ConstraintSet | None]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(logic_from_record(loads_record(line)))
    return out
