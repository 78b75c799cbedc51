"""Expression grammar for scenario documents.

Grammar (loosest to tightest binding)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Variables are ``x0..x3`` and ``y0..y3``; named constants ``pi`` and ``e``;
functions ``sqrt abs exp log sin cos``.  Trees evaluate on floats or on
:class:`~finsler_em.jets.Jet` values with the same code path.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from . import jets

VARIABLES = ("x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "sqrt": jets.sqrt,
    "abs": jets.fabs,
    "exp": jets.exp,
    "log": jets.log,
    "sin": jets.sin,
    "cos": jets.cos,
}


class ExpressionError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        loc = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{message}{loc}")


class ParseError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<num>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, what: str):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"{what}, found {found}", t.line, t.col)

    def _take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def _is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail("expected operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self._is_op("+", "-"):
            op = self._take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self._is_op("*", "/"):
            op = self._take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._is_op("-"):
            self._take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self._is_op("^"):
            self._take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self._take()
            return Num(float(t.text))
        if t.kind == "name":
            self._take()
            if self._is_op("("):
                if t.text not in FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function {t.text!r}", t.line, t.col)
                self._take()
                arg = self.expr()
                if not self._is_op(")"):
                    self._fail("expected ')'")
                self._take()
                return Call(t.text, arg)
            if t.text in VARIABLES:
                return Var(t.text)
            if t.text in CONSTANTS:
                return Const(t.text)
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.line, t.col)
        if self._is_op("("):
            self._take()
            node = self.expr()
            if not self._is_op(")"):
                self._fail("expected ')'")
            self._take()
            return node
        self._fail("expected a number, name or '('")


def parse_expression(text: str) -> Node:
    if not text or not text.strip():
        raise ParseError("empty expression", 1, 1)
    return _Parser(text).parse()


# printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _fmt_num(v: float) -> str:
    r = repr(float(v))
    if r in ("inf", "nan"):
        raise ExpressionError(f"cannot print non-finite number {r}")
    return r


def to_text(node: Node) -> str:
    """Render with the minimal parentheses needed to parse back to the same tree."""
    return _render(node, 0)


def _render(node: Node, ctx: int) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_render(node.arg, 0)})"
    if isinstance(node, Neg):
        s = "-" + _render(node.operand, _NEG_PREC)
        return f"({s})" if ctx > _NEG_PREC else s
    p = _PREC[node.op]
    if node.op == "^":
        # base must be an atom; exponent parses as unary
        left = _render(node.left, 5)
        right = _render(node.right, _NEG_PREC)
    else:
        left = _render(node.left, p)
        right = _render(node.right, p + 1)
    s = f"{left} {node.op} {right}" if p == 1 else f"{left}{node.op}{right}"
    return f"({s})" if ctx > p else s


# evaluation -------------------------------------------------------------

def evaluate(node: Node, x, y):
    """Evaluate on coordinate sequences of floats or jets."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return (x if node.name[0] == "x" else y)[int(node.name[1])]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -evaluate(node.operand, x, y)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](evaluate(node.arg, x, y))
    a = evaluate(node.left, x, y)
    b = evaluate(node.right, x, y)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if not isinstance(b, jets.Jet) and b == 0:
            raise jets.DomainError("division by zero")
        return a / b
    if isinstance(b, jets.Jet):
        return jets.exp(jets.log(a) * b)
    return jets.power(a, b)


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Num, Const)):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.operand if isinstance(node, Neg) else node.arg)
    return free_variables(node.left) | free_variables(node.right)


# symbolic helpers used to build catalog potentials ----------------------

def _is_num(n: Node, v: float | None = None) -> bool:
    return isinstance(n, Num) and (v is None or n.value == v)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    return BinOp("/", a, b)


def diff(node: Node, var: str) -> Node:
    """Symbolic partial derivative (no simplification beyond 0/1 folding)."""
    if isinstance(node, (Num, Const)):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        d = diff(node.operand, var)
        return Num(0.0) if _is_num(d, 0.0) else Neg(d)
    if isinstance(node, Call):
        u, du = node.arg, diff(node.arg, var)
        if _is_num(du, 0.0):
            return Num(0.0)
        outer = {
            "sqrt": lambda: _div(Num(0.5), node),
            "exp": lambda: node,
            "log": lambda: _div(Num(1.0), u),
            "sin": lambda: Call("cos", u),
            "cos": lambda: Neg(Call("sin", u)),
            "abs": lambda: _div(node, u),
        }[node.func]()
        return _mul(outer, du)
    a, b = node.left, node.right
    da, db = diff(a, var), diff(b, var)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _sub(_div(da, b), _div(_mul(a, db), BinOp("*", b, b)))
    # power
    if not free_variables(b):
        return _mul(_mul(b, BinOp("^", a, _sub(b, Num(1.0)))), da)
    return _mul(node, _add(_mul(db, Call("log", a)), _div(_mul(b, da), a)))
