"""Small expression language for frequency maps, perturbations and moduli.

Grammar (see docs/grammar.md for the EBNF):

    expr    := term (('+'|'-') term)*
    term    := unary (('*'|'/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          exponent must fold to a constant
    atom    := NUMBER | 'pi' | name | fn '(' expr ')' | '(' expr ')' | guard
    guard   := 'guard' '(' name '=' const ';' const ';' expr ')'

Functions: sin cos exp ln sqrt abs sign arcsin, plus the internal pair
dsign/dzero produced by differentiation of abs/sign (they evaluate like
sign/0 but raise NonDifferentiable when hit exactly at the kink).

`guard(v = c; val; body)` evaluates to `val` where v == c and to `body`
elsewhere; its derivative is pinned to 0 at the guarded point. While the
mask is active the guarded variable is replaced by a nearby safe abscissa
before the body is evaluated, so removable singularities (1/|v| and the
like) do not trip domain checks.

Evaluation is numpy-vectorized: environment values may be scalars or
arrays of any broadcastable shape.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, ExprError, NonDifferentiable

__all__ = [
    "Expr", "parse", "parse_vector", "evaluate", "differentiate",
    "to_source", "substitute", "variables", "constant_value",
]

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _as_arrays(env):
    out = {}
    for k, v in env.items():
        out[k] = np.asarray(v, dtype=float)
    return out


class Expr:
    """Base node. Subclasses implement eval/diff/src."""

    def eval(self, env):  # env: name -> ndarray
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def src(self) -> str:
        raise NotImplementedError

    prec = _PREC_ATOM

    def _wrap(self, context_prec: int) -> str:
        s = self.src()
        if self.prec < context_prec:
            return "(" + s + ")"
        return s

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()

    def children(self):
        return ()

    # convenience operators used when assembling derivative trees
    def __repr__(self):
        return f"<expr {self.src()}>"

    def __eq__(self, other):
        return isinstance(other, Expr) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Num(Expr):
    v: float

    @property
    def prec(self):
        return _PREC_ATOM if self.v >= 0 else _PREC_UNARY

    def eval(self, env):
        return np.float64(self.v)

    def diff(self, var):
        return Num(0.0)

    def src(self):
        return _fmt(self.v)

    def key(self):
        return ("num", self.v)


@dataclass(frozen=True, eq=False)
class Var(Expr):
    name: str

    def eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExprError(f"unbound variable {self.name!r}") from None

    def diff(self, var):
        return Num(1.0 if var == self.name else 0.0)

    def src(self):
        return self.name

    def key(self):
        return ("var", self.name)


@dataclass(frozen=True, eq=False)
class Bin(Expr):
    op: str
    a: Expr
    b: Expr

    @property
    def prec(self):
        return _PREC_ADD if self.op in "+-" else _PREC_MUL

    def children(self):
        return (self.a, self.b)

    def eval(self, env):
        x = self.a.eval(env)
        y = self.b.eval(env)
        if self.op == "+":
            return x + y
        if self.op == "-":
            return x - y
        if self.op == "*":
            return x * y
        if np.any(y == 0.0):
            raise DomainError(f"division by zero in {self.src()}")
        return x / y

    def diff(self, var):
        da, db = self.a.diff(var), self.b.diff(var)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, self.b), mul(self.a, db))
        return div(sub(mul(da, self.b), mul(self.a, db)), mul(self.b, self.b))

    def src(self):
        # right operand needs the next-higher binding to round-trip
        # non-associative cases like a-(b-c) and a/(b*c)
        left = self.a._wrap(self.prec)
        right = self.b._wrap(self.prec + 1)
        return f"{left} {self.op} {right}" if self.op in "+-" else f"{left}{self.op}{right}"

    def key(self):
        return (self.op, self.a.key(), self.b.key())


@dataclass(frozen=True, eq=False)
class Neg(Expr):
    a: Expr
    prec = _PREC_UNARY

    def children(self):
        return (self.a,)

    def eval(self, env):
        return -self.a.eval(env)

    def diff(self, var):
        return neg(self.a.diff(var))

    def src(self):
        return "-" + self.a._wrap(_PREC_UNARY + 1)

    def key(self):
        return ("neg", self.a.key())


@dataclass(frozen=True, eq=False)
class Pow(Expr):
    base: Expr
    expo: float
    prec = _PREC_POW

    def children(self):
        return (self.base,)

    def eval(self, env):
        b = self.base.eval(env)
        e = self.expo
        if e == int(e):
            if e < 0 and np.any(b == 0.0):
                raise DomainError(f"zero base with negative exponent in {self.src()}")
            return b ** int(e)
        if np.any(b < 0.0):
            raise DomainError(f"negative base with fractional exponent in {self.src()}")
        if e < 0 and np.any(b == 0.0):
            raise DomainError(f"zero base with negative exponent in {self.src()}")
        return b ** e

    def diff(self, var):
        db = self.base.diff(var)
        return mul(mul(Num(self.expo), powc(self.base, self.expo - 1.0)), db)

    def src(self):
        return f"{self.base._wrap(_PREC_ATOM)}^{_fmt(self.expo)}"

    def key(self):
        return ("pow", self.base.key(), self.expo)


def _d_abs(u):
    if np.any(u == 0.0):
        raise NonDifferentiable("derivative of abs at 0")
    return np.sign(u)


def _d_sign(u):
    if np.any(u == 0.0):
        raise NonDifferentiable("derivative of sign at 0")
    return np.zeros_like(u)


def _ln(u):
    if np.any(u <= 0.0):
        raise DomainError("ln of non-positive argument")
    return np.log(u)


def _sqrt(u):
    if np.any(u < 0.0):
        raise DomainError("sqrt of negative argument")
    return np.sqrt(u)


def _arcsin(u):
    if np.any(np.abs(u) > 1.0):
        raise DomainError("arcsin argument outside [-1, 1]")
    return np.arcsin(u)


_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "arcsin": _arcsin,
    "dsign": _d_abs,
    "dzero": _d_sign,
}


@dataclass(frozen=True, eq=False)
class Call(Expr):
    fn: str
    arg: Expr

    def children(self):
        return (self.arg,)

    def eval(self, env):
        return _FUNCS[self.fn](self.arg.eval(env))

    def diff(self, var):
        u, du = self.arg, self.arg.diff(var)
        fn = self.fn
        if fn == "sin":
            outer = Call("cos", u)
        elif fn == "cos":
            outer = neg(Call("sin", u))
        elif fn == "exp":
            outer = Call("exp", u)
        elif fn == "ln":
            return div(du, u)
        elif fn == "sqrt":
            return div(du, mul(Num(2.0), Call("sqrt", u)))
        elif fn == "arcsin":
            return div(du, Call("sqrt", sub(Num(1.0), mul(u, u))))
        elif fn == "abs":
            outer = Call("dsign", u)
        elif fn in ("sign", "dsign", "dzero"):
            # piecewise-constant away from the kink; keep the kink trap
            outer = Call("dzero", u)
        else:  # pragma: no cover
            raise ExprError(f"no derivative rule for {fn}")
        return mul(outer, du)

    def src(self):
        return f"{self.fn}({self.arg.src()})"

    def key(self):
        return ("call", self.fn, self.arg.key())


@dataclass(frozen=True, eq=False)
class Guard(Expr):
    var: str
    point: float
    value: float
    body: Expr

    def children(self):
        return (self.body,)

    def eval(self, env):
        try:
            arr = env[self.var]
        except KeyError:
            raise ExprError(f"unbound variable {self.var!r} in guard") from None
        mask = np.asarray(arr == self.point)
        if not mask.any():
            return self.body.eval(env)
        last = None
        for safe in (self.point + 0.25, self.point - 0.25,
                     self.point + 1.0, self.point - 1.0):
            env2 = dict(env)
            env2[self.var] = np.where(mask, safe, arr)
            try:
                raw = self.body.eval(env2)
            except ExprError as exc:
                last = exc
                continue
            return np.where(mask, self.value, raw)
        raise last

    def diff(self, var):
        return Guard(self.var, self.point, 0.0, self.body.diff(var))

    def src(self):
        return (f"guard({self.var} = {_fmt(self.point)}; "
                f"{_fmt(self.value)}; {self.body.src()})")

    def key(self):
        return ("guard", self.var, self.point, self.value, self.body.key())


# ----- smart constructors (light constant folding) -----

def add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v + b.v)
    if isinstance(a, Num) and a.v == 0.0:
        return b
    if isinstance(b, Num) and b.v == 0.0:
        return a
    return Bin("+", a, b)


def sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v - b.v)
    if isinstance(b, Num) and b.v == 0.0:
        return a
    if isinstance(a, Num) and a.v == 0.0:
        return neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v * b.v)
    if isinstance(a, Num):
        if a.v == 0.0:
            return Num(0.0)
        if a.v == 1.0:
            return b
    if isinstance(b, Num):
        if b.v == 0.0:
            return Num(0.0)
        if b.v == 1.0:
            return a
    return Bin("*", a, b)


def div(a, b):
    if isinstance(b, Num):
        if b.v == 0.0:
            raise DomainError("constant division by zero")
        if isinstance(a, Num):
            return Num(a.v / b.v)
        if b.v == 1.0:
            return a
    if isinstance(a, Num) and a.v == 0.0:
        return Num(0.0)
    return Bin("/", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.v)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def powc(base, expo: float):
    if expo == 0.0:
        return Num(1.0)
    if expo == 1.0:
        return base
    if isinstance(base, Num):
        probe = Pow(Num(base.v), expo)
        return Num(float(probe.eval({})))
    return Pow(base, expo)


# ----- lexer / parser -----

_TOKEN_RE = re.compile(r"""
    (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()=;,])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r} at position {pos}")
        pos = m.end()
        if m.lastgroup != "ws":
            toks.append((m.lastgroup, m.group(), m.start()))
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, val, pos = self.next()
        if val != value:
            got = repr(val) if val else "end of input"
            raise ExprSyntaxError(
                f"expected {value!r} at position {pos}, got {got}")

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input at position {pos}: {val!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.next()
            return neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.next()
            expo = self.unary()
            c = constant_value(expo)
            if c is None:
                raise ExprSyntaxError(
                    "exponent must be a constant expression "
                    f"(got {expo.src()!r})")
            return powc(base, c)
        return base

    def atom(self):
        kind, val, pos = self.next()
        if kind == "num":
            return Num(float(val))
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val == "pi":
                return Num(math.pi)
            if val == "guard":
                return self.guard()
            if val in _FUNCS:
                if self.peek()[1] != "(":
                    raise ExprSyntaxError(
                        f"function name {val!r} at position {pos} "
                        "used without arguments")
                self.next()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            return Var(val)
        raise ExprSyntaxError(f"unexpected {val!r} at position {pos}")

    def guard(self):
        self.expect("(")
        kind, name, pos = self.next()
        if kind != "name" or name in _FUNCS or name in ("pi", "guard"):
            raise ExprSyntaxError(f"guard needs a variable name at position {pos}")
        self.expect("=")
        point = self._const_section("guard point")
        self.expect(";")
        value = self._const_section("guard value")
        self.expect(";")
        body = self.expr()
        self.expect(")")
        return Guard(name, point, value, body)

    def _const_section(self, what):
        e = self.expr()
        c = constant_value(e)
        if c is None:
            raise ExprSyntaxError(f"{what} must be constant, got {e.src()!r}")
        return c


def constant_value(e: Expr):
    """Float value of a variable-free expression, or None."""
    for node in e.walk():
        if isinstance(node, (Var, Guard)):
            return None
    return float(e.eval({}))


def parse(text: str) -> Expr:
    """Parse source text into an expression tree."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression")
    return _Parser(text).parse()


def parse_vector(texts) -> list:
    return [parse(t) for t in texts]


def evaluate(e: Expr, env=None):
    """Evaluate with numpy broadcasting; env maps names to scalars/arrays."""
    return e.eval(_as_arrays(env or {}))


def differentiate(e: Expr, var: str) -> Expr:
    return e.diff(var)


def to_source(e: Expr) -> str:
    return e.src()


def variables(e: Expr):
    names = set()
    for node in e.walk():
        if isinstance(node, Var):
            names.add(node.name)
        elif isinstance(node, Guard):
            names.add(node.var)
    return sorted(names)


def substitute(e: Expr, mapping) -> Expr:
    """Replace variables by expressions (or numbers). Guarded variables may
    only be renamed or left alone."""
    subs = {k: (Num(float(v)) if not isinstance(v, Expr) else v)
            for k, v in mapping.items()}

    def rec(node):
        if isinstance(node, Var):
            return subs.get(node.name, node)
        if isinstance(node, Num):
            return node
        if isinstance(node, Bin):
            return Bin(node.op, rec(node.a), rec(node.b))
        if isinstance(node, Neg):
            return Neg(rec(node.a))
        if isinstance(node, Pow):
            return Pow(rec(node.base), node.expo)
        if isinstance(node, Call):
            return Call(node.fn, rec(node.arg))
        if isinstance(node, Guard):
            repl = subs.get(node.var)
            if repl is None:
                name = node.var
            elif isinstance(repl, Var):
                name = repl.name
            else:
                raise ExprError(
                    f"cannot substitute guarded variable {node.var!r} "
                    "with a compound expression")
            return Guard(name, node.point, node.value, rec(node.body))
        raise ExprError(f"unknown node {node!r}")  # pragma: no cover

    return rec(e)
