"""Lexer, parser, validator and printer for factor expressions.

Grammar (loosest binding first)::

    expr  := or ( "?" expr ":" expr )?
    or    := and ( "||" and )*
    and   := cmp ( "&&" cmp )*
    cmp   := add ( (">"|"<"|">="|"<="|"=="|"!=") add )*
    add   := mul ( ("+"|"-") mul )*
    mul   := unary ( ("*"|"/") unary )*
    unary := ("-"|"+") unary | atom
    atom  := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Names are case-insensitive; operators normalize to upper case and
variables to lower case.  ``unparse`` emits a canonical, fully
parenthesized text such that ``parse(unparse(e))`` equals ``e``.
"""

from __future__ import annotations

import re

from ..errors import (
    ArityError,
    DslSyntaxError,
    ExprValidationError,
    ParameterError,
    UnknownOperatorError,
)
from .ast import Call, Const, FactorExpr, Node, Var
from .catalogue import (
    CATALOGUE,
    DATA_SLOTS,
    INT_SLOTS,
    QUANTILE,
    VARIABLES,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<symbol>&&|\|\||>=|<=|==|!=|[-+*/(),?:><])
  | (?P<ws>\s+)
    """,
    re.VERBOSE,
)

_INFIX_CMP = {">": "GT", "<": "LT", ">=": "GE", "<=": "LE", "==": "EQ", "!=": "NE"}
_INFIX_ADD = {"+": "ADD", "-": "SUB"}
_INFIX_MUL = {"*": "MUL", "/": "DIV"}

# canonical-call -> infix text for the printer
_PRINT_INFIX = {
    "ADD": "+",
    "SUB": "-",
    "MUL": "*",
    "DIV": "/",
    "GT": ">",
    "LT": "<",
    "GE": ">=",
    "LE": "<=",
    "EQ": "==",
    "NE": "!=",
    "AND": "&&",
    "OR": "||",
}


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == text:
            return self.advance()
        raise DslSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.pos)

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise DslSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        cond = self.or_()
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "?":
            self.advance()
            then = self.expr()
            self.expect(":")
            other = self.expr()
            return Call("IFELSE", (cond, then, other))
        return cond

    def or_(self) -> Node:
        node = self.and_()
        while self.peek().kind == "symbol" and self.peek().text == "||":
            self.advance()
            node = Call("OR", (node, self.and_()))
        return node

    def and_(self) -> Node:
        node = self.cmp()
        while self.peek().kind == "symbol" and self.peek().text == "&&":
            self.advance()
            node = Call("AND", (node, self.cmp()))
        return node

    def cmp(self) -> Node:
        node = self.add()
        while self.peek().kind == "symbol" and self.peek().text in _INFIX_CMP:
            op = _INFIX_CMP[self.advance().text]
            node = Call(op, (node, self.add()))
        return node

    def add(self) -> Node:
        node = self.mul()
        while self.peek().kind == "symbol" and self.peek().text in _INFIX_ADD:
            op = _INFIX_ADD[self.advance().text]
            node = Call(op, (node, self.mul()))
        return node

    def mul(self) -> Node:
        node = self.unary()
        while self.peek().kind == "symbol" and self.peek().text in _INFIX_MUL:
            op = _INFIX_MUL[self.advance().text]
            node = Call(op, (node, self.unary()))
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "-":
            self.advance()
            inner = self.unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Call("NEG", (inner,))
        if tok.kind == "symbol" and tok.text == "+":
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self) -> Node:
        tok = self.advance()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.kind == "symbol" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "name":
            nxt = self.peek()
            if nxt.kind == "symbol" and nxt.text == "(":
                self.advance()
                args = [self.expr()]
                while self.peek().kind == "symbol" and self.peek().text == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                name = tok.text.upper()
                if name not in CATALOGUE:
                    raise UnknownOperatorError(f"unknown operator {tok.text!r}")
                return Call(name, tuple(args))
            lowered = tok.text.lower()
            if lowered in VARIABLES:
                return Var(lowered)
            if tok.text.upper() in CATALOGUE:
                raise DslSyntaxError(
                    f"operator {tok.text!r} requires an argument list", tok.pos
                )
            raise UnknownOperatorError(f"unknown variable or operator {tok.text!r}")
        raise DslSyntaxError(
            f"expected a value, found {tok.text or 'end of input'!r}", tok.pos
        )


def _require_int(node: Node, op: str, slot: str, position: int) -> int:
    if not isinstance(node, Const):
        raise ParameterError(f"{op}: {slot} (argument {position}) must be an integer literal")
    value = node.value
    if value != int(value):
        raise ParameterError(f"{op}: {slot} (argument {position}) must be an integer, got {value}")
    value = int(value)
    if value < 1:
        raise ParameterError(f"{op}: {slot} (argument {position}) must be >= 1, got {value}")
    return value


def _validate(node: Node, parent: Call | None = None) -> bool:
    """Walk the tree checking catalogue rules; returns True if a market
    variable occurs somewhere below."""
    if isinstance(node, Var):
        return True
    if isinstance(node, Const):
        return False
    assert isinstance(node, Call)
    sig = CATALOGUE.lookup(node.op, len(node.args))
    if sig is None:
        arities = CATALOGUE.arities(node.op)
        wanted = " or ".join(str(a) for a in arities)
        raise ArityError(
            f"{node.op} expects {wanted} argument(s), got {len(node.args)}"
        )
    if node.op == "SEQUENCE":
        ok = (
            parent is not None
            and parent.op in ("REGBETA", "REGRESI")
            and len(parent.args) == 3
            and parent.args[1] is node
        )
        if not ok:
            raise ExprValidationError(
                "SEQUENCE is only legal as the second argument of REGBETA or REGRESI"
            )
    saw_var = False
    for position, (slot, arg) in enumerate(zip(sig.slots, node.args), start=1):
        if slot in INT_SLOTS:
            _require_int(arg, node.op, slot, position)
        elif slot == QUANTILE:
            if not isinstance(arg, Const) or not (0.0 < arg.value < 1.0):
                raise ParameterError(
                    f"{node.op}: quantile (argument {position}) must be a literal in (0, 1)"
                )
        else:
            assert slot in DATA_SLOTS
            saw_var |= _validate(arg, node)
    if node.op == "SMA":
        n, m = int(node.args[1].value), int(node.args[2].value)
        if m > n:
            raise ParameterError(f"SMA: modifier {m} must not exceed window {n}")
    if node.op == "MACD":
        s, l = int(node.args[1].value), int(node.args[2].value)
        if s >= l:
            raise ParameterError(f"MACD: short window {s} must be less than long window {l}")
    if node.op in ("REGBETA", "REGRESI"):
        b = node.args[1]
        if isinstance(b, Call) and b.op == "SEQUENCE":
            seq_n = int(b.args[0].value)
            win = int(node.args[2].value)
            if seq_n != win:
                raise ParameterError(
                    f"{node.op}: SEQUENCE length {seq_n} must equal the regression window {win}"
                )
    return saw_var


def parse(text: str) -> FactorExpr:
    """Parse and validate an expression; raises on any catalogue violation."""
    root = _Parser(text).parse()
    if not _validate(root):
        raise ExprValidationError("expression references no market variable")
    return FactorExpr(root=root)


def _fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _is_single_group(text: str) -> bool:
    if not (text.startswith("(") and text.endswith(")")):
        return False
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and i < len(text) - 1:
                return False
    return True


def _grouped(text: str) -> str:
    return text if _is_single_group(text) else f"({text})"


def _print(node: Node) -> str:
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return _fmt_number(node.value)
    assert isinstance(node, Call)
    if node.op == "NEG":
        inner = node.args[0]
        text = _print(inner)
        if isinstance(inner, Const):
            text = f"({text})"
        return f"-{text}"
    if node.op == "IFELSE":
        c, a, b = (_grouped(_print(arg)) for arg in node.args)
        return f"({c}?{a}:{b})"
    if node.op in _PRINT_INFIX:
        left, right = (_print(arg) for arg in node.args)
        return f"({left}{_PRINT_INFIX[node.op]}{right})"
    return f"{node.op}({','.join(_print(arg) for arg in node.args)})"


def unparse(expr: FactorExpr) -> str:
    """Canonical text; ``parse(unparse(e))`` is structurally equal to ``e``."""
    return _print(expr.root)


def required_lookback(expr: FactorExpr) -> int:
    """Leading dates guaranteed missing: nested window/lag demands summed
    along the deepest path."""
    return _lookback(expr.root)


def _lookback(node: Node) -> int:
    if isinstance(node, Var):
        return 1 if node.name == "return" else 0
    if isinstance(node, Const):
        return 0
    assert isinstance(node, Call)
    sig = CATALOGUE.lookup(node.op, len(node.args))
    child = 0
    for slot, arg in zip(sig.slots, node.args):
        if slot in DATA_SLOTS:
            child = max(child, _lookback(arg))
    op = node.op
    if op in ("DELAY", "DELTA", "TS_PCTCHANGE", "RSI"):
        return child + int(node.args[1].value)
    if op in ("SMA", "EMA", "MACD"):
        # recursive smoothers are seeded at the first observation
        return child
    if op == "SEQUENCE":
        return 0
    window = None
    for slot, arg in zip(sig.slots, node.args):
        if slot in ("window", "period"):
            window = int(arg.value)
            break
    if window is not None:
        return child + window - 1
    return child


def list_operators(expr: FactorExpr) -> set[str]:
    """Canonical operator names appearing in the tree (variables excluded)."""
    out: set[str] = set()
    _collect_ops(expr.root, out)
    return out


def _collect_ops(node: Node, out: set[str]) -> None:
    if isinstance(node, Call):
        out.add(node.op)
        for arg in node.args:
            _collect_ops(arg, out)


def list_variables(expr: FactorExpr) -> set[str]:
    out: set[str] = set()
    _collect_vars(expr.root, out)
    return out


def _collect_vars(node: Node, out: set[str]) -> None:
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Call):
        for arg in node.args:
            _collect_vars(arg, out)


def negated(expr: FactorExpr) -> FactorExpr:
    """The sign-flipped expression (used for direction alignment)."""
    root = expr.root
    if isinstance(root, Call) and root.op == "NEG":
        return FactorExpr(root=root.args[0])
    return FactorExpr(root=Call("NEG", (root,)))
