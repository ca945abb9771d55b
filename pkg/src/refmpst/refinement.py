"""Refinement expressions over 32-bit integers, and variable maps.

Refinements are small boolean formulae over integer variables. Arithmetic
wraps around on signed 32-bit integers, so evaluation of a closed expression
is total and deterministic. A refinement with free variables is evaluated
against a :class:`VarMap`; if the map does not bind every free variable the
refinement is simply not satisfied.

The textual syntax accepted by :func:`parse_refinement` is the same one
produced by :func:`pretty`::

    true  false  42  x  e + e  e - e  e * e  e % e  e ^ e
    e = e  e != e  e < e  e <= e  e > e  e >= e  !b  b && b  b || b  (..)
"""

from __future__ import annotations

import re
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Union

INT_BITS = 32
_MODULUS = 1 << INT_BITS
_HALF = 1 << (INT_BITS - 1)

#: Name of the discard variable. It may be bound as a payload but can never
#: occur free in a refinement.
DISCARD = "_"


def wrap(value: int) -> int:
    """Reduce ``value`` to the signed 32-bit range with two's complement wrap."""
    value &= _MODULUS - 1
    return value - _MODULUS if value >= _HALF else value


class RefinementError(Exception):
    """Raised for malformed refinement text or ill-sorted expressions."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.message = message
        self.offset = offset


class NotClosed(Exception):
    """Raised when evaluating an expression that still has free variables."""

    def __init__(self, variables: frozenset[str]):
        super().__init__("expression is not closed: free " + ", ".join(sorted(variables)))
        self.variables = variables


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Top:
    pass


@dataclass(frozen=True)
class Bot:
    pass


@dataclass(frozen=True)
class IntLit:
    value: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", wrap(self.value))


@dataclass(frozen=True)
class Var:
    name: str


ARITH_OPS = ("+", "-", "*", "%", "^")
CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class ArithBin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


Expr = Union[Top, Bot, IntLit, Var, ArithBin, Cmp, Not, And, Or]
TOP = Top()
BOT = Bot()

_BOOL_NODES = (Top, Bot, Cmp, Not, And, Or)


def is_boolean(e: Expr) -> bool:
    return isinstance(e, _BOOL_NODES)


def conj(*parts: Expr) -> Expr:
    """Conjunction of ``parts`` with ``true`` as the unit."""
    out: Expr = TOP
    for p in parts:
        if isinstance(p, Top):
            continue
        out = p if isinstance(out, Top) else And(out, p)
    return out


# ---------------------------------------------------------------------------
# Free variables, substitution, evaluation


def fv(e: Expr) -> frozenset[str]:
    """Free variables of ``e``."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, (ArithBin, Cmp, And, Or)):
        return fv(e.left) | fv(e.right)
    if isinstance(e, Not):
        return fv(e.arg)
    return frozenset()


def constants(e: Expr) -> frozenset[int]:
    """Integer literals occurring in ``e``."""
    if isinstance(e, IntLit):
        return frozenset((e.value,))
    if isinstance(e, (ArithBin, Cmp, And, Or)):
        return constants(e.left) | constants(e.right)
    if isinstance(e, Not):
        return constants(e.arg)
    return frozenset()


def substitute(m: Mapping[str, int], e: Expr) -> Expr:
    """Replace every variable bound in ``m`` by its value."""
    if isinstance(e, Var):
        return IntLit(m[e.name]) if e.name in m else e
    if isinstance(e, ArithBin):
        return ArithBin(e.op, substitute(m, e.left), substitute(m, e.right))
    if isinstance(e, Cmp):
        return Cmp(e.op, substitute(m, e.left), substitute(m, e.right))
    if isinstance(e, And):
        return And(substitute(m, e.left), substitute(m, e.right))
    if isinstance(e, Or):
        return Or(substitute(m, e.left), substitute(m, e.right))
    if isinstance(e, Not):
        return Not(substitute(m, e.arg))
    return e


def _mod(a: int, b: int) -> int:
    # Truncated remainder, as for machine integers. A zero divisor leaves the
    # dividend unchanged so that evaluation stays total.
    if b == 0:
        return a
    r = abs(a) % abs(b)
    return wrap(-r if a < 0 else r)


def _pow(a: int, b: int) -> int:
    # The exponent is read as an unsigned 32-bit word.
    return wrap(pow(a, b & (_MODULUS - 1), _MODULUS))


_ARITH = {
    "+": lambda a, b: wrap(a + b),
    "-": lambda a, b: wrap(a - b),
    "*": lambda a, b: wrap(a * b),
    "%": _mod,
    "^": _pow,
}

_CMP = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class _Unbound(Exception):
    pass


def _eval(e: Expr, env: Mapping[str, int]):
    t = type(e)
    if t is Cmp:
        return _CMP[e.op](_eval(e.left, env), _eval(e.right, env))
    if t is Var:
        try:
            return env[e.name]
        except KeyError:
            raise _Unbound(e.name) from None
    if t is IntLit:
        return e.value
    if t is ArithBin:
        return _ARITH[e.op](_eval(e.left, env), _eval(e.right, env))
    if t is And:
        return _eval(e.left, env) and _eval(e.right, env)
    if t is Or:
        return _eval(e.left, env) or _eval(e.right, env)
    if t is Not:
        return not _eval(e.arg, env)
    if t is Top:
        return True
    if t is Bot:
        return False
    raise TypeError(f"not a refinement node: {e!r}")


def evaluate(e: Expr):
    """Evaluate a closed expression to a bool (boolean nodes) or an int."""
    free = fv(e)
    if free:
        raise NotClosed(free)
    return _eval(e, {})


def eval_closed(e: Expr) -> bool:
    """Truth value of a closed boolean refinement."""
    if not is_boolean(e):
        raise RefinementError("not a boolean refinement")
    return bool(evaluate(e))


def models(m: Mapping[str, int], r: Expr) -> bool:
    """``m |= r``: every free variable of ``r`` is bound and ``r`` holds.

    The domain condition is checked up front because boolean evaluation
    short-circuits: ``x < 0 || y = 1`` must not hold under ``{x: -1}``.
    """
    if type(r) is Top:
        return True
    for name in fv(r):
        if name not in m:
            return False
    try:
        return bool(_eval(r, m))
    except _Unbound:  # pragma: no cover - guarded above
        return False


# ---------------------------------------------------------------------------
# Variable maps


class VarMap(Mapping[str, int]):
    """Immutable, hashable finite map from variable names to values."""

    __slots__ = ("_d", "_h")

    def __init__(self, items: Mapping[str, int] | None = None):
        self._d: dict[str, int] = dict(items) if items else {}
        self._h: int | None = None

    @classmethod
    def empty(cls) -> "VarMap":
        return _EMPTY

    def __getitem__(self, key: str) -> int:
        return self._d[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __contains__(self, key: object) -> bool:
        return key in self._d

    def __hash__(self) -> int:
        if self._h is None:
            self._h = hash(frozenset(self._d.items()))
        return self._h

    def __eq__(self, other: object) -> bool:
        if isinstance(other, VarMap):
            return self._d == other._d
        if isinstance(other, Mapping):
            return self._d == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v}" for k, v in sorted(self._d.items()))
        return "{" + body + "}"

    def lookup(self, name: str) -> int | None:
        return self._d.get(name)

    def update(self, name: str, value: int) -> "VarMap":
        d = dict(self._d)
        d[name] = wrap(value)
        return VarMap(d)

    def remove(self, name: str) -> "VarMap":
        if name not in self._d:
            return self
        d = dict(self._d)
        del d[name]
        return VarMap(d)

    def dom(self) -> frozenset[str]:
        return frozenset(self._d)

    def disjoint_union(self, other: Mapping[str, int]) -> "VarMap":
        clash = self.dom() & frozenset(other)
        if clash:
            raise ValueError("maps overlap on " + ", ".join(sorted(clash)))
        d = dict(self._d)
        d.update(other)
        return VarMap(d)

    def to_dict(self) -> dict[str, int]:
        return dict(sorted(self._d.items()))


_EMPTY = VarMap()


# ---------------------------------------------------------------------------
# Pretty printing

_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_CMP, _PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = range(1, 9)


def _prec(e: Expr) -> int:
    if isinstance(e, Or):
        return _PREC_OR
    if isinstance(e, And):
        return _PREC_AND
    if isinstance(e, Not):
        return _PREC_NOT
    if isinstance(e, Cmp):
        return _PREC_CMP
    if isinstance(e, ArithBin):
        if e.op in "+-":
            return _PREC_ADD
        if e.op in "*%":
            return _PREC_MUL
        return _PREC_POW
    if isinstance(e, IntLit) and e.value < 0:
        # "-5" is only an atom where a unary minus may start an operand.
        return _PREC_POW
    return _PREC_ATOM


def _wrap_if(text: str, cond: bool) -> str:
    return f"({text})" if cond else text


def pretty(e: Expr) -> str:
    """Render ``e`` in the textual syntax; ``parse_refinement`` inverts it."""
    if isinstance(e, Top):
        return "true"
    if isinstance(e, Bot):
        return "false"
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Not):
        inner = pretty(e.arg)
        return "!" + _wrap_if(inner, _prec(e.arg) < _PREC_ATOM and not isinstance(e.arg, Not))
    p = _prec(e)
    if isinstance(e, Or):
        op, left_paren, right_paren = "||", _prec(e.left) < p, _prec(e.right) <= p
    elif isinstance(e, And):
        op, left_paren, right_paren = "&&", _prec(e.left) < p, _prec(e.right) <= p
    elif isinstance(e, Cmp):
        op, left_paren, right_paren = e.op, _prec(e.left) <= p, _prec(e.right) <= p
    elif e.op == "^":
        op, left_paren, right_paren = "^", _prec(e.left) <= p, _prec(e.right) < p
    else:
        op, left_paren, right_paren = e.op, _prec(e.left) < p, _prec(e.right) <= p
    # A negative literal on the left of "^" must keep its parentheses.
    if isinstance(e, ArithBin) and e.op == "^" and isinstance(e.left, IntLit) and e.left.value < 0:
        left_paren = True
    return f"{_wrap_if(pretty(e.left), left_paren)} {op} {_wrap_if(pretty(e.right), right_paren)}"


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<op>&&|\|\||!=|<=|>=|[-+*%^=<>!()]))"
)

_KEYWORDS = {"true", "false"}


def tokenize(text: str) -> list[tuple[str, str, int]]:
    """Split ``text`` into ``(kind, value, offset)`` tokens ending with ``eof``."""
    tokens = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise RefinementError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup or "op"
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


MAX_NESTING = 64


def _describe(kind: str, value: str) -> str:
    return "end of input" if kind == "eof" else repr(value)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.nesting = 0

    def enter(self) -> None:
        self.nesting += 1
        if self.nesting > MAX_NESTING:
            self.fail("refinement is nested too deeply")

    def peek(self) -> tuple[str, str, int]:
        return self.toks[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, value: str) -> bool:
        kind, v, _ = self.peek()
        if kind == "op" and v == value:
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> None:
        if not self.accept(value):
            kind, v, off = self.peek()
            raise RefinementError(f"expected {value!r} but found {_describe(kind, v)}", off)

    def fail(self, message: str):
        raise RefinementError(message, self.peek()[2])

    # boolean layers
    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.accept("||"):
            left = Or(self._bool(left), self._bool(self.parse_and()))
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.accept("&&"):
            left = And(self._bool(left), self._bool(self.parse_not()))
        return left

    def parse_not(self) -> Expr:
        if self.accept("!"):
            self.enter()
            return Not(self._bool(self.parse_not()))
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        left = self.parse_add()
        kind, v, _ = self.peek()
        if kind == "op" and v in CMP_OPS:
            self.take()
            right = self.parse_add()
            nk, nv, _ = self.peek()
            if nk == "op" and nv in CMP_OPS:
                self.fail("comparisons do not chain; add parentheses")
            return Cmp(v, self._int(left), self._int(right))
        return left

    # arithmetic layers
    def parse_add(self) -> Expr:
        left = self.parse_mul()
        while True:
            kind, v, _ = self.peek()
            if kind == "op" and v in ("+", "-"):
                self.take()
                left = ArithBin(v, self._int(left), self._int(self.parse_mul()))
            else:
                return left

    def parse_mul(self) -> Expr:
        left = self.parse_pow()
        while True:
            kind, v, _ = self.peek()
            if kind == "op" and v in ("*", "%"):
                self.take()
                left = ArithBin(v, self._int(left), self._int(self.parse_pow()))
            else:
                return left

    def parse_pow(self) -> Expr:
        base = self.parse_atom()
        if self.accept("^"):
            self.enter()
            return ArithBin("^", self._int(base), self._int(self.parse_pow()))
        return base

    def parse_atom(self) -> Expr:
        kind, v, off = self.take()
        if kind == "int":
            return IntLit(int(v))
        if kind == "ident":
            if v == "true":
                return TOP
            if v == "false":
                return BOT
            if v == DISCARD:
                raise RefinementError("the discard variable '_' cannot be used in a refinement", off)
            return Var(v)
        if kind == "op" and v == "(":
            self.enter()
            inner = self.parse_or()
            self.expect(")")
            return inner
        if kind == "op" and v == "-":
            nk, nv, _ = self.peek()
            if nk == "int":
                self.take()
                return IntLit(-int(nv))
            self.enter()
            return ArithBin("-", IntLit(0), self._int(self.parse_atom()))
        raise RefinementError(f"unexpected {_describe(kind, v)}", off)

    def _int(self, e: Expr) -> Expr:
        if is_boolean(e):
            self.fail("expected an integer expression")
        return e

    def _bool(self, e: Expr) -> Expr:
        if not is_boolean(e):
            self.fail("expected a boolean expression")
        return e


def depth(e: Expr) -> int:
    """Height of the expression tree, computed without recursion."""
    best = 0
    stack = [(e, 1)]
    while stack:
        node, d = stack.pop()
        best = max(best, d)
        if isinstance(node, (ArithBin, Cmp, And, Or)):
            stack.append((node.left, d + 1))
            stack.append((node.right, d + 1))
        elif isinstance(node, Not):
            stack.append((node.arg, d + 1))
    return best


def _checked(p: _Parser) -> Expr:
    e = p.parse_or()
    if depth(e) > MAX_NESTING:
        raise RefinementError("refinement is nested too deeply", 0)
    return e


def parse_refinement(text: str) -> Expr:
    """Parse a boolean refinement. Raises :class:`RefinementError`."""
    p = _Parser(text)
    e = _checked(p)
    kind, v, off = p.peek()
    if kind != "eof":
        raise RefinementError(f"unexpected {v!r} after refinement", off)
    if not is_boolean(e):
        raise RefinementError("a refinement must be a boolean expression", 0)
    return e


def parse_expr(text: str) -> Expr:
    """Parse an integer or boolean expression."""
    p = _Parser(text)
    e = _checked(p)
    kind, v, off = p.peek()
    if kind != "eof":
        raise RefinementError(f"unexpected {v!r} after expression", off)
    return e
