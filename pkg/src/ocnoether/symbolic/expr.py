"""Expression tree nodes, variable alphabets and printing.

Trees are immutable.  Equality is structural, so two trees compare equal
exactly when they print the same way (up to exact-vs-float constants of
equal value).  Python operators build raw, unsimplified trees::

    >>> t, x = Var("t"), Var("x1")
    >>> to_string(t * x + 2)
    't*x1 + 2'
"""

from __future__ import annotations

import re
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Iterator, Union

Number = Union[Fraction, float]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")

_IDENT_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9]*\Z")


class Expr:
    __slots__ = ("_hash",)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def _key(self):
        raise NotImplementedError

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other):
            return NotImplemented if not isinstance(other, Expr) else False
        return self._key() == other._key()

    def __hash__(self):
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__, self._key()))
            object.__setattr__(self, "_hash", h)
            return h

    def __setattr__(self, name, value):
        raise AttributeError("expression nodes are immutable")

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(repr(c) for c in self._key())})"

    def __str__(self):
        return to_string(self)

    # construction sugar
    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __pow__(self, other):
        return Pow(self, as_expr(other))

    def __rpow__(self, other):
        return Pow(as_expr(other), self)

    def __neg__(self):
        return Neg(self)


def _init(obj, **fields):
    for k, v in fields.items():
        object.__setattr__(obj, k, v)


class Const(Expr):
    """Numeric leaf.  Integers and decimal text become exact ``Fraction``s."""

    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, bool):
            raise TypeError("bool is not a numeric constant")
        if isinstance(value, int):
            value = Fraction(value)
        elif isinstance(value, Fraction):
            pass
        elif isinstance(value, float):
            pass
        else:
            raise TypeError(f"unsupported constant {value!r}")
        _init(self, value=value)

    def _key(self):
        return (self.value,)

    @property
    def is_exact(self) -> bool:
        return isinstance(self.value, Fraction)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if not isinstance(name, str) or not _IDENT_RE.match(name) or name in FUNCTIONS:
            raise ValueError(f"invalid variable name {name!r}")
        _init(self, name=name)

    def _key(self):
        return (self.name,)


class BinOp(Expr):
    __slots__ = ("left", "right")
    symbol = "?"

    def __init__(self, left: Expr, right: Expr):
        if not isinstance(left, Expr) or not isinstance(right, Expr):
            raise TypeError("operands must be expressions")
        _init(self, left=left, right=right)

    def children(self):
        return (self.left, self.right)

    def _key(self):
        return (self.left, self.right)


class Add(BinOp):
    __slots__ = ()
    symbol = "+"


class Sub(BinOp):
    __slots__ = ()
    symbol = "-"


class Mul(BinOp):
    __slots__ = ()
    symbol = "*"


class Div(BinOp):
    __slots__ = ()
    symbol = "/"


class Pow(BinOp):
    __slots__ = ()
    symbol = "^"


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        if not isinstance(arg, Expr):
            raise TypeError("operand must be an expression")
        _init(self, arg=arg)

    def children(self):
        return (self.arg,)

    def _key(self):
        return (self.arg,)


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        if not isinstance(arg, Expr):
            raise TypeError("argument must be an expression")
        _init(self, name=name, arg=arg)

    def children(self):
        return (self.arg,)

    def _key(self):
        return (self.name, self.arg)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction, float)) and not isinstance(value, bool):
        return Const(value)
    raise TypeError(f"cannot convert {value!r} to an expression")


def sin(e) -> Func:
    return Func("sin", as_expr(e))


def cos(e) -> Func:
    return Func("cos", as_expr(e))


def exp(e) -> Func:
    return Func("exp", as_expr(e))


def log(e) -> Func:
    return Func("log", as_expr(e))


def sqrt(e) -> Func:
    return Func("sqrt", as_expr(e))


ZERO = Const(0)
ONE = Const(1)


# ---------------------------------------------------------------------------
# Alphabets


_GROUP_PREFIXES = ("t", "x", "u", "psi", "s", "xdot", "udot", "psidot")
_INDEXED_RE = re.compile(r"(t|s|x|u|psi|xdot|udot|psidot)(\d*)\Z")


def var_rank(name: str) -> tuple:
    """Deterministic sort key matching the canonical alphabet order.

    t < x1..xn < u1..um < psi1..psin < s < xdot* < udot* < psidot* < others.
    """
    m = _INDEXED_RE.match(name)
    if m:
        group, idx = m.groups()
        if group in ("t", "s") and idx:
            return (len(_GROUP_PREFIXES), 0, name)
        return (_GROUP_PREFIXES.index(group), int(idx) if idx else 0, name)
    return (len(_GROUP_PREFIXES), 0, name)


class VarAlphabet:
    """Ordered, duplicate-free collection of variable names."""

    __slots__ = ("names", "_index")

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        for n in names:
            if not _IDENT_RE.match(n) or n in FUNCTIONS:
                raise ValueError(f"invalid variable name {n!r}")
        if len(set(names)) != len(names):
            raise ValueError("alphabet names must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __setattr__(self, name, value):
        raise AttributeError("VarAlphabet is immutable")

    @classmethod
    def canonical(cls, n: int, m: int) -> "VarAlphabet":
        return cls(canonical_names(n, m))

    def extend(self, *names: str) -> "VarAlphabet":
        return VarAlphabet(self.names + tuple(n for n in names if n not in self._index))

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, VarAlphabet) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"VarAlphabet({list(self.names)!r})"


def canonical_names(n: int, m: int) -> tuple[str, ...]:
    return (
        ("t",)
        + tuple(f"x{i}" for i in range(1, n + 1))
        + tuple(f"u{j}" for j in range(1, m + 1))
        + tuple(f"psi{i}" for i in range(1, n + 1))
        + ("s",)
    )


# ---------------------------------------------------------------------------
# Traversal


def free_vars(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        else:
            stack.extend(node.children())
    return frozenset(out)


def node_count(e: Expr) -> int:
    count, stack = 0, [e]
    while stack:
        node = stack.pop()
        count += 1
        stack.extend(node.children())
    return count


# ---------------------------------------------------------------------------
# Printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    # negative and fractional constants print already parenthesised
    return _PREC.get(type(e), _ATOM_PREC)


def format_number(v: Number) -> str:
    """Grammar-conforming text for a constant (no exponent notation)."""
    if isinstance(v, Fraction):
        if v.denominator == 1:
            s = str(v.numerator)
        else:
            s = f"{v.numerator}/{v.denominator}"
        return f"({s})" if v < 0 or v.denominator != 1 else s
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"cannot print non-finite constant {v!r}")
    s = format(Decimal(repr(v)), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".") or "0"
    return f"({s})" if v < 0 else s


def to_string(e: Expr) -> str:
    """Print ``e`` in the input grammar with minimal parentheses.

    ``parse(to_string(e))`` reproduces ``e`` node for node whenever every
    constant in ``e`` is a non-negative integer (rationals and negatives
    are built from Div/Neg nodes by ``simplify``, so simplified trees of
    exact input always qualify).
    """
    if isinstance(e, Const):
        return format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        left, right = to_string(e.left), to_string(e.right)
        if _prec(e.left) <= 4:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if isinstance(e, BinOp):
        p = _PREC[type(e)]
        left, right = to_string(e.left), to_string(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        if p == 1:
            return f"{left} {e.symbol} {right}"
        return f"{left}{e.symbol}{right}"
    raise TypeError(f"not an expression: {e!r}")
