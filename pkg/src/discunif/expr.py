"""Parsing, evaluation, and exact differentiation of scalar expressions in x, y.

This is the analytic layer of the toolkit: metric components and conformal
factors arrive as strings, are parsed once, and expose exact partial
derivatives, so the curvature kernels never have to fall back to numerical
differentiation of user input.

Grammar (`^` binds tighter than unary minus, which binds tighter than `*` `/`):

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" INTEGER)*
    atom   := NUMBER | "x" | "y" | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := "sin" | "cos" | "exp" | "log" | "sqrt"

Exponents are literal nonnegative integers, which keeps differentiation closed
over the grammar.  Constant subtrees are folded at construction (including
multiplication by a literal zero, which may widen the domain of the folded
tree); no other rewriting is performed, so correctness rests on evaluation,
not on any canonical form.

Expressions are immutable and evaluation is pure; instances may be shared
freely across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "Expr", "Const", "Var", "Add", "Sub", "Mul", "Div", "Pow", "Neg", "Fn",
    "parse", "evaluate", "differentiate", "to_string", "substitute",
    "X", "Y", "const", "sin", "cos", "exp", "log", "sqrt",
]

_FUNC_NAMES = ("sin", "cos", "exp", "log", "sqrt")
_VAR_NAMES = ("x", "y")


@dataclass(frozen=True)
class Expr:
    """Base node; supports arithmetic operators for programmatic construction."""

    def __add__(self, other):
        return _add(self, _coerce(other))

    def __radd__(self, other):
        return _add(_coerce(other), self)

    def __sub__(self, other):
        return _sub(self, _coerce(other))

    def __rsub__(self, other):
        return _sub(_coerce(other), self)

    def __mul__(self, other):
        return _mul(self, _coerce(other))

    def __rmul__(self, other):
        return _mul(_coerce(other), self)

    def __truediv__(self, other):
        return _div(self, _coerce(other))

    def __rtruediv__(self, other):
        return _div(_coerce(other), self)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        return _pow(self, n)

    def __neg__(self):
        return _neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Fn(Expr):
    name: str
    arg: Expr


X = Var("x")
Y = Var("y")


def const(v):
    return Const(float(v))


def _coerce(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Const(float(v))
    raise TypeError(f"cannot use {type(v).__name__} as an expression")


# Smart constructors: fold constants, drop neutral elements.  These keep the
# trees produced by repeated differentiation from blowing up.

def _add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Add(a, b)


def _sub(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return _neg(b)
    return Sub(a, b)


def _mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(0.0)
        if b.value == 1.0:
            return a
    return Mul(a, b)


def _div(a, b):
    if isinstance(b, Const):
        if b.value == 0.0:
            raise DomainError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if isinstance(a, Const) and a.value == 0.0:
        return Const(0.0)
    return Div(a, b)


def _pow(base, n):
    if n == 0:
        return Const(1.0)
    if n == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** n)
    return Pow(base, n)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _fn(name, arg):
    if isinstance(arg, Const):
        with np.errstate(all="ignore"):
            val = _NP_FUNCS[name](arg.value)
        if not np.isfinite(val):
            raise DomainError(f"{name}({arg.value}) is undefined")
        return Const(float(val))
    return Fn(name, arg)


def sin(e):
    return _fn("sin", _coerce(e))


def cos(e):
    return _fn("cos", _coerce(e))


def exp(e):
    return _fn("exp", _coerce(e))


def log(e):
    return _fn("log", _coerce(e))


def sqrt(e):
    return _fn("sqrt", _coerce(e))


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", off)
        return self.advance()

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = _add(e, rhs) if val == "+" else _sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                e = _mul(e, rhs) if val == "*" else _div(e, rhs)
            else:
                return e

    def factor(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return _neg(self.factor())
        return self.power()

    def power(self):
        e = self.atom()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "^":
                self.advance()
                e = _pow(e, self.exponent())
            else:
                return e

    def exponent(self):
        kind, val, off = self.peek()
        if kind != "num":
            raise ParseError("exponent must be a nonnegative integer literal", off)
        if not val.isdigit():
            raise ParseError(f"non-integer exponent {val!r}", off)
        self.advance()
        return int(val)

    def atom(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val in _VAR_NAMES:
                return Var(val)
            if val in _FUNC_NAMES:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return _fn(val, arg)
            raise ParseError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"unexpected token {val!r}" if val else "unexpected end of input", off)


def parse(text):
    """Parse expression text into an :class:`Expr`; raises :class:`ParseError`."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Evaluation

_NP_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
}


def _eval(e, xs, ys):
    if isinstance(e, Const):
        return np.full(np.broadcast(xs, ys).shape, e.value) if xs.ndim or ys.ndim else e.value
    if isinstance(e, Var):
        return xs if e.name == "x" else ys
    if isinstance(e, Add):
        return _eval(e.left, xs, ys) + _eval(e.right, xs, ys)
    if isinstance(e, Sub):
        return _eval(e.left, xs, ys) - _eval(e.right, xs, ys)
    if isinstance(e, Mul):
        return _eval(e.left, xs, ys) * _eval(e.right, xs, ys)
    if isinstance(e, Div):
        num = _eval(e.left, xs, ys)
        den = _eval(e.right, xs, ys)
        if np.any(den == 0.0):
            raise DomainError("division by zero")
        return num / den
    if isinstance(e, Pow):
        return _eval(e.base, xs, ys) ** e.exponent
    if isinstance(e, Neg):
        return -_eval(e.arg, xs, ys)
    if isinstance(e, Fn):
        arg = _eval(e.arg, xs, ys)
        if e.name == "log" and np.any(arg <= 0.0):
            raise DomainError("log of a nonpositive value")
        if e.name == "sqrt" and np.any(arg < 0.0):
            raise DomainError("sqrt of a negative value")
        return _NP_FUNCS[e.name](arg)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e, x, y):
    """Evaluate ``e`` at ``(x, y)``; scalars in, scalar out (arrays broadcast)."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, xs, ys)
    if not np.all(np.isfinite(out)):
        raise DomainError("expression evaluated to a non-finite value")
    if xs.ndim == 0 and ys.ndim == 0:
        return float(out)
    return np.asarray(out, dtype=float)


# ---------------------------------------------------------------------------
# Differentiation

def differentiate(e, var):
    """Exact partial derivative of ``e`` with respect to ``var`` ("x" or "y")."""
    if var not in _VAR_NAMES:
        raise ValueError(f"unknown variable {var!r}")
    return _diff(e, var)


def _diff(e, var):
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Add):
        return _add(_diff(e.left, var), _diff(e.right, var))
    if isinstance(e, Sub):
        return _sub(_diff(e.left, var), _diff(e.right, var))
    if isinstance(e, Mul):
        return _add(_mul(_diff(e.left, var), e.right), _mul(e.left, _diff(e.right, var)))
    if isinstance(e, Div):
        num = _sub(_mul(_diff(e.left, var), e.right), _mul(e.left, _diff(e.right, var)))
        return _div(num, _pow(e.right, 2))
    if isinstance(e, Pow):
        return _mul(_mul(Const(float(e.exponent)), _pow(e.base, e.exponent - 1)), _diff(e.base, var))
    if isinstance(e, Neg):
        return _neg(_diff(e.arg, var))
    if isinstance(e, Fn):
        inner = _diff(e.arg, var)
        if e.name == "sin":
            return _mul(_fn("cos", e.arg), inner)
        if e.name == "cos":
            return _neg(_mul(_fn("sin", e.arg), inner))
        if e.name == "exp":
            return _mul(e, inner)
        if e.name == "log":
            return _div(inner, e.arg)
        if e.name == "sqrt":
            return _div(inner, _mul(Const(2.0), e))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Printing and substitution

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4, Fn: 5, Const: 5, Var: 5}


def _prec(e):
    if isinstance(e, Const) and e.value < 0:
        return 3  # prints with a leading minus
    return _PREC[type(e)]


def _wrap(e, minimum):
    s = to_string(e)
    return f"({s})" if _prec(e) < minimum else s


def to_string(e):
    """Render ``e`` so that ``parse(to_string(e))`` evaluates identically."""
    if isinstance(e, Const):
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"{_wrap(e.left, 1)} + {_wrap(e.right, 2)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.left, 1)} - {_wrap(e.right, 2)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.left, 2)}*{_wrap(e.right, 3)}"
    if isinstance(e, Div):
        return f"{_wrap(e.left, 2)}/{_wrap(e.right, 4)}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.arg, 4)}"
    if isinstance(e, Pow):
        return f"{_wrap(e.base, 5)}^{e.exponent}"
    if isinstance(e, Fn):
        return f"{e.name}({to_string(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e, mapping):
    """Replace variables by expressions; ``mapping`` maps names to Expr."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Add):
        return _add(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Sub):
        return _sub(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Mul):
        return _mul(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Div):
        return _div(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Pow):
        return _pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Neg):
        return _neg(substitute(e.arg, mapping))
    if isinstance(e, Fn):
        return _fn(e.name, substitute(e.arg, mapping))
    raise TypeError(f"not an expression node: {e!r}")
