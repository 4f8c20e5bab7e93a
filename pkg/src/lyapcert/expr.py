"""Expression trees for potentials and test functions.

Potentials are written as plain text over the variables ``x1 .. xn`` and
turned into an immutable AST.  The AST supports exact symbolic partial
derivatives, printing that round-trips through the parser, and vectorized
evaluation with numpy.

Two shorthand tokens are recognised: ``r2`` (the squared Euclidean norm)
and ``theta`` (the polar angle ``atan2(x2, x1)``, dimension 2 only).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

UNARY_FUNCS = ("exp", "log", "sin", "cos", "sqrt")
BINARY_FUNCS = ("atan2",)


class ParseError(ValueError):
    """Raised on malformed potential text; ``pos`` is the 0-based offset."""

    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


class DomainError(ArithmeticError):
    """Raised when an expression evaluates to NaN/Inf at some point."""


class Expr:
    """Base node.  Nodes are frozen dataclasses, so ``==`` is structural."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 0-based


@dataclass(frozen=True)
class R2(Expr):
    """Sum of squares of all ``dim`` variables."""

    dim: int


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(float(x))


ZERO = Const(0.0)
ONE = Const(1.0)


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


# Smart constructors: constant folding and identity elements, nothing more.

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            v = a.value ** b.value
        except (OverflowError, ZeroDivisionError):
            return BinOp("^", a, b)
        if isinstance(v, float) and math.isfinite(v):
            return Const(v)
        return BinOp("^", a, b)
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(name: str, *args: Expr) -> Expr:
    if all(isinstance(a, Const) for a in args):
        v = _FUNCS[name](*[a.value for a in args])
        if math.isfinite(v):
            return Const(float(v))
    return Call(name, tuple(args))


_FUNCS = {
    "exp": lambda u: math.exp(u) if u < 709 else math.inf,
    "log": lambda u: math.log(u) if u > 0 else math.nan,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": lambda u: math.sqrt(u) if u >= 0 else math.nan,
    "atan2": math.atan2,
}


def theta() -> Expr:
    return Call("atan2", (Var(1), Var(0)))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(src: str):
    pos = 0
    out = []
    src = src.rstrip()
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[bad]!r}", bad)
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        if text == "**":
            text = "^"
        out.append((kind, text, start))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := unary (('*'|'/') unary)*
    # unary  := '-' unary | '+' unary | pow
    # pow    := atom ('^' unary)?          right associative
    # atom   := number | name | name '(' args ')' | '(' expr ')'

    def __init__(self, src: str, dim: int):
        self.toks = _tokenize(src)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.take()
        if t[1] != text:
            raise ParseError(f"expected {text!r}, got {t[1] or 'end of input'!r}", t[2])
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise ParseError(f"unexpected token {t[1]!r}", t[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            e = add(e, r) if op == "+" else sub(e, r)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            r = self.unary()
            e = mul(e, r) if op == "*" else div(e, r)
        return e

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] == "-":
            self.take()
            return neg(self.unary())
        if t[0] == "op" and t[1] == "+":
            self.take()
            return self.unary()
        return self.pow()

    def pow(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if text == "(" and kind == "op":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if self.peek()[1] == "(":
                return self.func(text, pos)
            return self.name(text, pos)
        raise ParseError(f"unexpected token {text or 'end of input'!r}", pos)

    def name(self, text, pos):
        m = re.fullmatch(r"x([1-9]\d*)", text)
        if m:
            i = int(m.group(1))
            if i > self.dim:
                raise ParseError(f"unknown identifier {text!r} (dim={self.dim})", pos)
            return Var(i - 1)
        if text == "r2":
            return R2(self.dim)
        if text == "theta":
            if self.dim != 2:
                raise ParseError("'theta' requires dim=2", pos)
            return theta()
        if text == "pi":
            return Const(math.pi)
        if text in UNARY_FUNCS or text in BINARY_FUNCS:
            raise ParseError(f"function {text!r} used without arguments", pos)
        raise ParseError(f"unknown identifier {text!r}", pos)

    def func(self, name, pos):
        if name not in UNARY_FUNCS and name not in BINARY_FUNCS:
            raise ParseError(f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        want = 1 if name in UNARY_FUNCS else 2
        if len(args) != want:
            raise ParseError(f"{name} expects {want} argument(s), got {len(args)}", pos)
        return call(name, *args)


def parse_potential(src: str, dim: int) -> Expr:
    """Parse ``src`` into an expression over ``x1 .. x{dim}``.

    Raises
    ------
    ParseError
        On syntax errors, unknown identifiers or wrong function arity.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    return _Parser(src, dim).parse()


# --------------------------------------------------------------- printing

def to_text(e: Expr) -> str:
    """Fully parenthesised text that parses back to an equal tree."""
    if isinstance(e, Const):
        r = repr(float(e.value))
        return f"({r})" if e.value < 0 or r.startswith("-") else r
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, R2):
        return "r2"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(type(e))


# --------------------------------------------------------- differentiation

def differentiate(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to variable ``i`` (0-based)."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, R2):
        return mul(Const(2.0), Var(i)) if i < e.dim else ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, i))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, i), differentiate(b, i)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        if e.op == "/":
            return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
        if e.op == "^":
            if isinstance(b, Const):
                return mul(mul(b, power(a, Const(b.value - 1.0))), da)
            # d(a^b) = a^b (b' log a + b a'/a)
            return mul(e, add(mul(db, call("log", a)), div(mul(b, da), a)))
    if isinstance(e, Call):
        if e.name == "atan2":
            y, x = e.args
            dy, dx = differentiate(y, i), differentiate(x, i)
            num = sub(mul(x, dy), mul(y, dx))
            return div(num, add(power(x, Const(2.0)), power(y, Const(2.0))))
        (u,) = e.args
        du = differentiate(u, i)
        if _is(du, 0.0):
            return ZERO
        if e.name == "exp":
            return mul(e, du)
        if e.name == "log":
            return div(du, u)
        if e.name == "sin":
            return mul(call("cos", u), du)
        if e.name == "cos":
            return neg(mul(call("sin", u), du))
        if e.name == "sqrt":
            return div(du, mul(Const(2.0), e))
    raise TypeError(f"cannot differentiate {e!r}")


def gradient_exprs(e: Expr, dim: int) -> list:
    return [differentiate(e, i) for i in range(dim)]


def laplacian_expr(e: Expr, dim: int) -> Expr:
    out = ZERO
    for i in range(dim):
        out = add(out, differentiate(differentiate(e, i), i))
    return out


# ------------------------------------------------------------- evaluation

_NP_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "atan2": np.arctan2,
}


def _eval(e: Expr, xs):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return xs[e.index]
    if isinstance(e, R2):
        return sum(xs[k] * xs[k] for k in range(e.dim))
    if isinstance(e, Neg):
        return -_eval(e.arg, xs)
    if isinstance(e, BinOp):
        a = _eval(e.left, xs)
        b = _eval(e.right, xs)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return np.divide(a, b)
        if isinstance(e.right, Const) and float(e.right.value).is_integer():
            return np.power(a, int(e.right.value)) if e.right.value >= 0 \
                else 1.0 / np.power(a, -int(e.right.value))
        return np.power(a, b)
    if isinstance(e, Call):
        return _NP_FUNCS[e.name](*[_eval(a, xs) for a in e.args])
    raise TypeError(type(e))


def evaluate(e: Expr, xs: Sequence, check: bool = True):
    """Evaluate ``e`` with ``xs[k]`` bound to variable ``k``.

    ``xs`` entries may be scalars or broadcast-compatible arrays.  With
    ``check`` set, any NaN/Inf raises :class:`DomainError` naming the first
    offending point.
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(e, xs), dtype=float)
    shape = np.broadcast_shapes(*(x.shape for x in xs)) if xs else ()
    out = np.broadcast_to(out, shape).copy() if out.shape != shape else out
    if check and not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))
        idx = tuple(bad[0]) if out.ndim else ()
        where = [float(np.broadcast_to(x, shape)[idx]) for x in xs]
        raise DomainError(f"{to_text(e)[:80]} not finite at x={where}")
    return out


def free_vars(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, R2):
        return set(range(e.dim))
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Call):
        return set().union(*(free_vars(a) for a in e.args))
    return set()


# ---------------------------------------------------------- scalar fields

class ScalarField:
    """A compiled expression with symbolic gradient, Laplacian and Hessian.

    All derivative expressions are built once at construction; calls only
    evaluate them.  Points are passed as a sequence of coordinate arrays
    (``pts[k]`` holds coordinate ``k``), so whole grids evaluate at once.
    """

    def __init__(self, expr: Expr, dim: int):
        if free_vars(expr) - set(range(dim)):
            raise ValueError("expression uses variables beyond dim")
        self.expr = expr
        self.dim = dim
        self.grad_exprs = tuple(differentiate(expr, i) for i in range(dim))
        self.hess_exprs = tuple(
            tuple(differentiate(self.grad_exprs[i], j) for j in range(dim))
            for i in range(dim)
        )
        lap = ZERO
        for i in range(dim):
            lap = add(lap, self.hess_exprs[i][i])
        self.lap_expr = lap

    def __repr__(self):
        return f"ScalarField({to_text(self.expr)!s}, dim={self.dim})"

    def value(self, pts):
        return evaluate(self.expr, pts)

    def gradient(self, pts):
        return np.stack([evaluate(g, pts) for g in self.grad_exprs])

    def laplacian(self, pts):
        return evaluate(self.lap_expr, pts)

    def hessian(self, pts):
        """Array of shape ``(dim, dim, *pts_shape)``."""
        rows = [np.stack([evaluate(h, pts) for h in row]) for row in self.hess_exprs]
        return np.stack(rows)


def compile_field(e: Expr, dim: int) -> ScalarField:
    return ScalarField(e, dim)


def field(src: str, dim: int) -> ScalarField:
    """Parse and compile in one step."""
    return ScalarField(parse_potential(src, dim), dim)
