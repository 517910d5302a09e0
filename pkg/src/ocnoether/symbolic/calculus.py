"""Differentiation, substitution, evaluation and compilation of trees."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

from ..errors import AlphabetError, DomainError, MissingBindingError
from .expr import (
    ONE,
    ZERO,
    Add,
    Const,
    Div,
    Expr,
    Func,
    Mul,
    Neg,
    Pow,
    Sub,
    Var,
    VarAlphabet,
    as_expr,
    free_vars,
)
from .normal import simplify

_free = lru_cache(maxsize=65536)(free_vars)


def _d(e: Expr, v: str) -> Expr:
    if v not in _free(e):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Add):
        return Add(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Sub):
        return Sub(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Neg):
        return Neg(_d(e.arg, v))
    if isinstance(e, Mul):
        return Add(Mul(_d(e.left, v), e.right), Mul(e.left, _d(e.right, v)))
    if isinstance(e, Div):
        num = Sub(Mul(_d(e.left, v), e.right), Mul(e.left, _d(e.right, v)))
        return Div(num, Pow(e.right, Const(2)))
    if isinstance(e, Pow):
        b, x = e.left, e.right
        if v not in _free(x):
            return Mul(Mul(x, Pow(b, Sub(x, ONE))), _d(b, v))
        # d(b^x) = b^x * (x' log b + x b'/b)
        return Mul(e, Add(Mul(_d(x, v), Func("log", b)), Div(Mul(x, _d(b, v)), b)))
    if isinstance(e, Func):
        a, da = e.arg, _d(e.arg, v)
        if e.name == "sin":
            outer = Func("cos", a)
        elif e.name == "cos":
            outer = Neg(Func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            outer = Div(ONE, a)
        elif e.name == "sqrt":
            outer = Div(ONE, Mul(Const(2), e))
        elif e.name == "abs":
            outer = Div(a, e)
        else:  # pragma: no cover - guarded by Func constructor
            raise ValueError(e.name)
        return Mul(outer, da)
    raise TypeError(f"not an expression: {e!r}")


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``, simplified."""
    return simplify(_d(e, v))


def replace(e: Expr, bindings: Mapping[str, Expr]) -> Expr:
    """Simultaneous variable replacement without simplification."""
    if isinstance(e, Var):
        return bindings.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(replace(e.arg, bindings))
    if isinstance(e, Func):
        return Func(e.name, replace(e.arg, bindings))
    return type(e)(replace(e.left, bindings), replace(e.right, bindings))


def substitute(
    e: Expr,
    bindings: Mapping[str, object],
    alphabet: VarAlphabet | Iterable[str] | None = None,
) -> Expr:
    """Replace variables simultaneously and simplify.

    ``bindings`` values may be trees or numbers.  An empty mapping
    returns ``e`` untouched.  If ``alphabet`` is given, every replaced
    name must belong to it.
    """
    if not bindings:
        return e
    if alphabet is not None:
        names = set(alphabet)
        bad = sorted(k for k in bindings if k not in names)
        if bad:
            raise AlphabetError(f"substituted names not in alphabet: {', '.join(bad)}")
    exprs = {k: as_expr(v) for k, v in bindings.items()}
    return simplify(replace(e, exprs))


# ---------------------------------------------------------------------------
# scalar evaluation


def _check(value: float, node: Expr) -> float:
    if not math.isfinite(value):
        raise DomainError("non-finite result", node)
    return value


def _eval(e: Expr, b: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(b[e.name])
        except KeyError:
            raise MissingBindingError(f"no value bound for {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, b)
    if isinstance(e, Func):
        a = _eval(e.arg, b)
        name = e.name
        if name == "log" and a <= 0:
            raise DomainError("log of non-positive value", e)
        if name == "sqrt" and a < 0:
            raise DomainError("sqrt of negative value", e)
        try:
            if name == "abs":
                return abs(a)
            return _check(getattr(math, name)(a), e)
        except OverflowError:
            raise DomainError("overflow", e) from None
    lhs = _eval(e.left, b)
    rhs = _eval(e.right, b)
    if isinstance(e, Add):
        return _check(lhs + rhs, e)
    if isinstance(e, Sub):
        return _check(lhs - rhs, e)
    if isinstance(e, Mul):
        return _check(lhs * rhs, e)
    if isinstance(e, Div):
        if rhs == 0:
            raise DomainError("division by zero", e)
        return _check(lhs / rhs, e)
    if isinstance(e, Pow):
        if lhs == 0 and rhs < 0:
            raise DomainError("zero raised to a negative power", e)
        if lhs < 0 and not float(rhs).is_integer():
            raise DomainError("negative base with non-integer exponent", e)
        try:
            return _check(math.pow(lhs, rhs), e)
        except (OverflowError, ValueError):
            raise DomainError("power out of range", e) from None
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """IEEE double value of ``e``.

    Raises ``MissingBindingError`` for unbound variables and ``DomainError``
    (carrying the offending subtree) for log/sqrt/power/division domain
    violations or overflow.
    """
    return _eval(e, bindings)


# ---------------------------------------------------------------------------
# compilation

_NP_FUNCS = {"sin": "np.sin", "cos": "np.cos", "exp": "np.exp", "log": "np.log",
             "sqrt": "np.sqrt", "abs": "np.abs"}
_MATH_FUNCS = {"sin": "math.sin", "cos": "math.cos", "exp": "math.exp", "log": "math.log",
               "sqrt": "math.sqrt", "abs": "abs"}


def _code(e: Expr, names: dict, mode: str) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        if e.name not in names:
            names[e.name] = f"_v{len(names)}"
        return names[e.name]
    if isinstance(e, Neg):
        return f"(-{_code(e.arg, names, mode)})"
    if isinstance(e, Func):
        table = _NP_FUNCS if mode == "numpy" else _MATH_FUNCS
        return f"{table[e.name]}({_code(e.arg, names, mode)})"
    lhs, rhs = _code(e.left, names, mode), _code(e.right, names, mode)
    if isinstance(e, Pow):
        if mode == "numpy":
            return f"np.power({lhs}, {rhs})"
        return f"math.pow({lhs}, {rhs})"
    return f"({lhs} {e.symbol} {rhs})"


@lru_cache(maxsize=4096)
def compile_expr(e: Expr, mode: str = "numpy") -> Callable[[Mapping[str, object]], object]:
    """Compile ``e`` to a function of a name -> value mapping.

    ``mode="numpy"`` broadcasts over array inputs and returns a float
    array; domain violations surface as nan/inf for the caller to check.
    ``mode="math"`` works on Python floats and raises ``ValueError``,
    ``ZeroDivisionError`` or ``OverflowError`` on domain violations.
    """
    if mode not in ("numpy", "math"):
        raise ValueError(f"unknown mode {mode!r}")
    names: dict[str, str] = {}
    body = _code(e, names, mode)
    lines = ["def _f(_b):"]
    for name, local in names.items():
        lines.append(f"    {local} = _b[{name!r}]")
    lines.append(f"    return {body}")
    namespace = {"np": np, "math": math}
    exec(compile("\n".join(lines), "<ocnoether-compiled>", "exec"), namespace)
    raw = namespace["_f"]
    used = tuple(names)

    if mode == "math":
        def scalar(bindings):
            try:
                return raw(bindings)
            except KeyError as exc:
                raise MissingBindingError(f"no value bound for {exc.args[0]!r}") from None
        scalar.variables = used
        scalar.expr = e
        return scalar

    def vectorised(bindings):
        try:
            arrays = {k: np.asarray(bindings[k], dtype=float) for k in used}
        except KeyError as exc:
            raise MissingBindingError(f"no value bound for {exc.args[0]!r}") from None
        with np.errstate(all="ignore"):
            out = np.asarray(raw(arrays), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        if "__shape__" in bindings:
            shape = np.broadcast_shapes(shape, tuple(bindings["__shape__"]))
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out

    vectorised.variables = used
    vectorised.expr = e
    return vectorised
