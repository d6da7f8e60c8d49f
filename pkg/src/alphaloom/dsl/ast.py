"""Expression AST nodes.

Infix sugar is normalized at parse time into canonical operator
applications (``a + b`` becomes ``ADD``, ``a > b`` becomes ``GT``,
``(c)?(a):(b)`` becomes ``IFELSE``), so the tree has exactly three node
kinds.  Nodes are frozen; structural equality is dataclass equality.
"""

from __future__ import annotations

from dataclasses import dataclass


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Call(Node):
    op: str
    args: tuple[Node, ...]


@dataclass(frozen=True)
class FactorExpr:
    """A parsed, validated factor expression."""

    root: Node
