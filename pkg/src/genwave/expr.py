"""Tiny arithmetic-expression language for scenario coefficient functions.

Grammar (frozen):

    expr    := term (("+"|"-") term)*
    term    := unary (("*"|"/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right-associative, binds above unary minus
    atom    := NUMBER | VAR | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

Variables are exactly ``t``, ``x``, ``eps``.  Functions: sin, cos, exp, log,
sqrt, abs, tanh (unary) and min, max (binary).  Precedence is ``^`` above
unary minus above ``*``/``/`` above ``+``/``-``; ``^`` is right-associative,
all other binary operators are left-associative.

Evaluation follows IEEE double semantics and is vectorized over numpy array
bindings.  Overflow to +/-inf (e.g. from exp) is allowed; NaN, division by
zero, and log/sqrt domain violations raise :class:`EvalError` carrying the
offending subexpression.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvalError, ParseError

VARIABLES = ("t", "x", "eps")
UNARY_FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs", "tanh")
BINARY_FUNCTIONS = ("min", "max")
FUNCTIONS = UNARY_FUNCTIONS + BINARY_FUNCTIONS


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Neg, Bin, Call]


@dataclass(frozen=True)
class Bindings:
    """Values for the three scenario variables; eps must be positive."""

    t: float | np.ndarray = 0.0
    x: float | np.ndarray = 0.0
    eps: float = 1.0

    def __post_init__(self):
        if not np.all(np.asarray(self.eps) > 0):
            raise ValueError("eps must be > 0")


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

# Binding powers: ^ > unary minus > * / > + -
_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            off = len(text) - len(stripped)
            raise ParseError(
                f"unexpected character {stripped[0]!r} at offset {off}", off,
                ("number", "identifier", "operator"))
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        self.i += 1

    def expect(self, value: str):
        kind, val, off = self.tok
        if kind != "op" or val != value:
            raise ParseError(
                f"expected {value!r} at offset {off}, found {val or 'end of input'!r}",
                off, (value,))
        self.advance()

    def parse(self) -> Expr:
        node = self.expression(0)
        kind, val, off = self.tok
        if kind != "end":
            raise ParseError(
                f"trailing input at offset {off}: {val!r}", off, ("end of input",))
        return node

    def expression(self, rbp: int) -> Expr:
        left = self.prefix()
        while True:
            kind, val, off = self.tok
            if kind != "op" or val not in _BP:
                break
            lbp = _BP[val]
            if lbp <= rbp:
                break
            self.advance()
            # right-associativity of ^ via reduced right binding power
            right = self.expression(lbp - 1 if val == "^" else lbp)
            left = Bin(val, left, right)
        return left

    def prefix(self) -> Expr:
        kind, val, off = self.tok
        if kind == "num":
            self.advance()
            return Num(float(val))
        if kind == "name":
            self.advance()
            if val in VARIABLES:
                return Var(val)
            if val in FUNCTIONS:
                self.expect("(")
                args = [self.expression(0)]
                while self.tok[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expression(0))
                self.expect(")")
                arity = 2 if val in BINARY_FUNCTIONS else 1
                if len(args) != arity:
                    raise ParseError(
                        f"{val} takes {arity} argument(s), got {len(args)} at offset {off}",
                        off, (f"{arity} arguments",))
                return Call(val, tuple(args))
            raise ParseError(
                f"unknown identifier {val!r} at offset {off}", off,
                VARIABLES + FUNCTIONS)
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.expression(_UNARY_BP))
        if kind == "op" and val == "(":
            self.advance()
            node = self.expression(0)
            self.expect(")")
            return node
        raise ParseError(
            f"expected an operand at offset {off}, found {val or 'end of input'!r}",
            off, ("number", "variable", "function", "(", "-"))


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ParseError` with a byte offset and the expected-token set
    on malformed input, and names unknown identifiers explicitly.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0, ("expression",))
    return _Parser(text).parse()


def _bp_of(node: Expr) -> int:
    if isinstance(node, Bin):
        return _BP[node.op]
    if isinstance(node, Neg):
        return _UNARY_BP
    return 100


def to_string(node: Expr) -> str:
    """Render a tree so that ``parse_expr(to_string(e)) == e``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_string(a) for a in node.args)})"
    if isinstance(node, Neg):
        arg = to_string(node.arg)
        if _bp_of(node.arg) <= _UNARY_BP:
            arg = f"({arg})"
        return f"-{arg}"
    if isinstance(node, Bin):
        lbp = _BP[node.op]
        left = to_string(node.left)
        right = to_string(node.right)
        # parenthesize children that bind looser, or equally on the
        # non-associative side
        if node.op == "^":
            if _bp_of(node.left) <= lbp:
                left = f"({left})"
            if _bp_of(node.right) < lbp:
                right = f"({right})"
        else:
            if _bp_of(node.left) < lbp:
                left = f"({left})"
            if _bp_of(node.right) <= lbp:
                right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Expr) -> frozenset[str]:
    """Set of variable names appearing in the tree."""
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return variables(node.arg)
    if isinstance(node, Bin):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        out: frozenset[str] = frozenset()
        for a in node.args:
            out |= variables(a)
        return out
    return frozenset()


_UNARY_IMPL = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "abs": np.abs,
}


def eval_expr(expr: Expr, b: Bindings):
    """Evaluate ``expr`` at the given bindings (scalars or numpy arrays).

    Division by zero, log of a nonpositive value, sqrt of a negative value,
    and any NaN result raise :class:`EvalError` identifying the offending
    subexpression.  Overflow to infinity is returned as-is.
    """
    env = {"t": b.t, "x": b.x, "eps": b.eps}

    def ev(node):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, Neg):
            return -ev(node.arg)
        if isinstance(node, Bin):
            lhs, rhs = ev(node.left), ev(node.right)
            with np.errstate(all="ignore"):
                if node.op == "+":
                    out = lhs + rhs
                elif node.op == "-":
                    out = lhs - rhs
                elif node.op == "*":
                    out = lhs * rhs
                elif node.op == "/":
                    if np.any(np.asarray(rhs) == 0):
                        raise EvalError("division by zero", to_string(node))
                    out = lhs / rhs
                else:
                    out = np.power(lhs, rhs)
            if np.any(np.isnan(np.asarray(out))):
                raise EvalError("result is NaN", to_string(node))
            return out
        if isinstance(node, Call):
            args = [np.asarray(ev(a), dtype=float) for a in node.args]
            with np.errstate(all="ignore"):
                if node.func == "log":
                    if np.any(args[0] <= 0):
                        raise EvalError("log of nonpositive value", to_string(node))
                    out = np.log(args[0])
                elif node.func == "sqrt":
                    if np.any(args[0] < 0):
                        raise EvalError("sqrt of negative value", to_string(node))
                    out = np.sqrt(args[0])
                elif node.func == "min":
                    out = np.minimum(args[0], args[1])
                elif node.func == "max":
                    out = np.maximum(args[0], args[1])
                else:
                    out = _UNARY_IMPL[node.func](args[0])
            if np.any(np.isnan(out)):
                raise EvalError("result is NaN", to_string(node))
            if out.ndim == 0:
                return float(out)
            return out
        raise TypeError(f"not an expression node: {node!r}")

    return ev(expr)
