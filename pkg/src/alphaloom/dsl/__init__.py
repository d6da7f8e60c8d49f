"""Factor expression DSL: parsing, validation, evaluation, analysis."""

from .ast import Call, Const, FactorExpr, Node, Var
from .catalogue import CATALOGUE, FAMILIES, GLUE_FAMILIES, VARIABLES, OperatorCatalogue
from .evaluate import evaluate
from .parser import (
    list_operators,
    list_variables,
    negated,
    parse,
    required_lookback,
    unparse,
)

__all__ = [
    "CATALOGUE",
    "Call",
    "Const",
    "FAMILIES",
    "FactorExpr",
    "GLUE_FAMILIES",
    "Node",
    "OperatorCatalogue",
    "VARIABLES",
    "Var",
    "evaluate",
    "list_operators",
    "list_variables",
    "negated",
    "parse",
    "required_lookback",
    "unparse",
]
