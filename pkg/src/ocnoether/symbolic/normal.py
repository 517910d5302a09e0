"""Canonical sum-of-monomials normal form.

A normalised expression is a ``Poly``: a mapping from monomials to
coefficients.  A monomial is a sorted tuple of ``(atom, exponent)`` pairs
with rational exponents.  Atoms are variables or subtrees the rule set
treats as opaque: function applications, powers with non-rational
exponents, sums raised to negative or fractional powers, and a few
single-term bases whose fractional power cannot be distributed safely
(``(x^2)^(1/2)`` is ``|x|``, not ``x``).

Coefficients stay ``Fraction`` until a float enters; any float operand
turns the affected coefficient into a float.

``simplify`` is ``build(normalize(e))``.  ``build`` emits only Div/Neg
nodes for rationals and negatives so that printed output reparses to the
same tree.
"""

from __future__ import annotations

import math
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Tuple, Union

import numpy as np

from ..errors import DomainError, EvaluationError, NonPolynomialError
from .expr import (
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
    free_vars,
    to_string,
    var_rank,
)

Number = Union[Fraction, float]
Monomial = Tuple[Tuple[Expr, Fraction], ...]
Poly = Dict[Monomial, Number]

# refuse to expand a multi-term power whose naive term count exceeds this
EXPAND_LIMIT = 200_000

_ONE = Fraction(1)


# ---------------------------------------------------------------------------
# ordering


@lru_cache(maxsize=None)
def atom_key(a: Expr) -> tuple:
    if isinstance(a, Var):
        return (0, var_rank(a.name), "")
    return (1, (), to_string(a))


def mono_key(m: Monomial) -> tuple:
    return (0 if m else 1, tuple((atom_key(a), -e) for a, e in m))


@lru_cache(maxsize=None)
def _atom_kind(a: Expr) -> str:
    if isinstance(a, Var):
        return "var"
    if isinstance(a, Const):
        return "const"
    if isinstance(a, Func):
        return "func"
    if isinstance(a, (Add, Sub)):
        return "sum"
    if isinstance(a, Pow):
        q = _as_constant(normalize(a.right))
        if isinstance(q, Fraction) and _as_constant(normalize(a.left)) is None:
            return "mono"
        return "gpow"
    return "mono"


# ---------------------------------------------------------------------------
# poly arithmetic


def _as_constant(p: Poly):
    """The constant value of ``p`` or ``None`` if it is not constant."""
    if not p:
        return Fraction(0)
    if len(p) == 1 and () in p:
        return p[()]
    return None


def _const(c: Number) -> Poly:
    return {(): c} if c != 0 else {}


def _add(p: Poly, q: Poly, sign: int = 1) -> Poly:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + (c if sign > 0 else -c)
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v
    return out


def _scale(p: Poly, c: Number) -> Poly:
    if c == 0:
        return {}
    return {m: v * c for m, v in p.items() if v * c != 0}


def _merge(m1: Monomial, m2: Monomial) -> list:
    if not m1:
        return list(m2)
    if not m2:
        return list(m1)
    d = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    return list(d.items())


def _fix(coef: Number, factors) -> Poly:
    """Canonicalise one product ``coef * prod(atom^e)`` into a Poly."""
    kept = []
    pending = []
    for a, e in factors:
        if e == 0:
            continue
        kind = _atom_kind(a)
        if kind == "const":
            c = a.value
            whole = math.floor(e)
            frac = e - whole
            if whole:
                coef = coef * c**whole if isinstance(c, float) else coef * Fraction(c) ** whole
            if frac:
                kept.append((a, frac))
            continue
        if kind == "sum" and e.denominator == 1 and e > 0:
            base = normalize(a)
            if len(base) ** int(e) <= EXPAND_LIMIT:
                pending.append(_pow_int(base, int(e), a))
                continue
        if kind == "mono" and e.denominator == 1:
            pending.append(_pow(normalize(a), {(): e}))
            continue
        kept.append((a, e))
    if coef == 0:
        return {}
    kept.sort(key=lambda f: atom_key(f[0]))
    out: Poly = {tuple(kept): coef}
    for p in pending:
        out = _mul(out, p)
    return out


def _simple_merge(m1: Monomial, m2: Monomial):
    """Fast path when every atom is a variable; returns None otherwise."""
    for a, _ in m1:
        if not isinstance(a, Var):
            return None
    for a, _ in m2:
        if not isinstance(a, Var):
            return None
    d = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    items = [(a, e) for a, e in d.items() if e != 0]
    items.sort(key=lambda f: atom_key(f[0]))
    return tuple(items)


def _mul(p: Poly, q: Poly) -> Poly:
    if not p or not q:
        return {}
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            fast = _simple_merge(m1, m2)
            if fast is not None:
                contrib = {fast: c1 * c2}
            else:
                contrib = _fix(c1 * c2, _merge(m1, m2))
            for m, c in contrib.items():
                v = out.get(m, 0) + c
                if v == 0:
                    out.pop(m, None)
                else:
                    out[m] = v
    return out


def _leading(p: Poly):
    m = min(p, key=mono_key)
    return p[m]


def _atom_power(atom: Expr, e: Fraction, coef: Number = _ONE) -> Poly:
    if coef == 0:
        return {}
    return {((atom, Fraction(e)),): coef}


def _pow_int(base: Poly, n: int, atom: Expr | None = None) -> Poly:
    """``base**n`` for a multi-term base and integer ``n``."""
    if n == 0:
        return {(): _ONE}
    if n > 0:
        if len(base) ** n > EXPAND_LIMIT:
            if atom is None:
                atom = build(base)
            return _atom_power(atom, Fraction(n))
        result: Poly = {(): _ONE}
        sq = base
        k = n
        while k:
            if k & 1:
                result = _mul(result, sq)
            k >>= 1
            if k:
                sq = _mul(sq, sq)
        return result
    lead = _leading(base)
    monic = _scale(base, 1 / lead if isinstance(lead, float) else Fraction(1) / lead)
    return _atom_power(build(monic), Fraction(n), _num_pow(lead, n))


def _num_pow(c: Number, n) -> Number:
    if isinstance(c, float) or isinstance(n, float):
        return float(c) ** float(n)
    return Fraction(c) ** int(n)


def _int_root(n: int, d: int):
    if n < 0:
        return None
    if n in (0, 1):
        return n
    try:
        r = round(n ** (1.0 / d))
    except OverflowError:
        return None
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**d == n:
            return cand
    return None


def _const_power(c: Number, q: Fraction) -> Poly:
    """``c**q`` for a positive constant and non-integer rational ``q``."""
    if isinstance(c, float):
        return _const(c ** float(q))
    if c == 1:
        return {(): _ONE}
    p, d = q.numerator, q.denominator
    rn, rd = _int_root(c.numerator, d), _int_root(c.denominator, d)
    if rn is not None and rd is not None:
        return _const(Fraction(rn, rd) ** p)
    whole = math.floor(q)
    frac = q - whole
    coef = Fraction(c) ** whole
    return {((Const(c), frac),): coef}


def _pow(base: Poly, expo: Poly) -> Poly:
    q = _as_constant(expo)
    if q is None:
        # general exponent: opaque unless the base is 1
        if _as_constant(base) == 1:
            return {(): _ONE}
        return _atom_power(Pow(build(base), build(expo)), _ONE)
    if isinstance(q, float):
        if q.is_integer():
            q = Fraction(int(q))
        else:
            c = _as_constant(base)
            if c is not None and c >= 0:
                if c == 0:
                    if q < 0:
                        raise DomainError("zero raised to a negative power")
                    return {}
                return _const(float(c) ** q)
            return _atom_power(Pow(build(base), Const(q)), _ONE)
    # rational exponent
    if q == 0:
        return {(): _ONE}
    if not base:
        if q < 0:
            raise DomainError("division by zero")
        return {}
    if len(base) == 1:
        (m, c), = base.items()
        if q.denominator == 1:
            n = int(q)
            return _fix(_num_pow(c, n), [(a, e * n) for a, e in m])
        # fractional power of a single term
        ok = c > 0 and all(
            not (e.denominator == 1 and e.numerator % 2 == 0)
            or ((e * q).denominator == 1 and (e * q).numerator % 2 == 0)
            for a, e in m
        )
        if ok:
            out = _const_power(c, q)
            return _mul(out, _fix(_ONE, [(a, e * q) for a, e in m]))
        if not m:
            # negative constant to a fractional power
            return _atom_power(Pow(build(base), build(expo)), _ONE)
        if c > 0:
            return _mul(_const_power(c, q), _atom_power(build({m: _ONE}), q))
        return _atom_power(build(base), q)
    if q.denominator == 1:
        return _pow_int(base, int(q))
    lead = _leading(base)
    mag = abs(lead)
    monic = _scale(base, 1 / mag if isinstance(mag, float) else Fraction(1) / mag)
    return _mul(_const_power(mag, q), _atom_power(build(monic), q))


_EXACT_FUNC = {
    "sin": {Fraction(0): Fraction(0)},
    "cos": {Fraction(0): Fraction(1)},
    "exp": {Fraction(0): Fraction(1)},
    "log": {Fraction(1): Fraction(0)},
}

_MATH_FUNC = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "abs": abs,
}


def _func(name: str, arg: Poly) -> Poly:
    if name == "sqrt":
        return _pow(arg, {(): Fraction(1, 2)})
    c = _as_constant(arg)
    if c is not None:
        if name == "abs":
            return _const(abs(c))
        if isinstance(c, Fraction):
            table = _EXACT_FUNC.get(name, {})
            if c in table:
                return _const(table[c])
        else:
            try:
                return _const(float(_MATH_FUNC[name](c)))
            except (ValueError, OverflowError):
                pass
    return _atom_power(Func(name, build(arg)), _ONE)


@lru_cache(maxsize=65536)
def normalize(e: Expr) -> Poly:
    """Normal form of ``e``.  The returned dict must not be mutated."""
    if isinstance(e, Const):
        return _const(e.value)
    if isinstance(e, Var):
        return {((e, _ONE),): _ONE}
    if isinstance(e, Add):
        return _add(normalize(e.left), normalize(e.right))
    if isinstance(e, Sub):
        return _add(normalize(e.left), normalize(e.right), -1)
    if isinstance(e, Neg):
        return _scale(normalize(e.arg), -1)
    if isinstance(e, Mul):
        return _mul(normalize(e.left), normalize(e.right))
    if isinstance(e, Div):
        den = normalize(e.right)
        c = _as_constant(den)
        if c is not None:
            if c == 0:
                raise DomainError("division by literal zero", e)
            return _scale(normalize(e.left), 1 / c if isinstance(c, float) else 1 / Fraction(c))
        return _mul(normalize(e.left), _pow(den, {(): Fraction(-1)}))
    if isinstance(e, Pow):
        return _pow(normalize(e.left), normalize(e.right))
    if isinstance(e, Func):
        return _func(e.name, normalize(e.arg))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# rebuilding


def _pos_const(v: Number) -> Expr:
    if isinstance(v, Fraction) and v.denominator != 1:
        return Div(Const(v.numerator), Const(v.denominator))
    return Const(v)


def const_expr(v: Number) -> Expr:
    """Canonical tree for a constant: no negative or fractional leaves."""
    if v < 0:
        return _negate_elem(_pos_const(-v))
    return _pos_const(v)


def _negate_elem(el: Expr) -> Expr:
    if isinstance(el, Div) and isinstance(el.left, Const):
        return Div(Neg(el.left), el.right)
    return Neg(el)


def _term_elems(m: Monomial, mag: Number) -> list:
    elems = []
    if mag != 1 or not m:
        elems.append(_pos_const(mag))
    for a, e in m:
        elems.append(a if e == 1 else Pow(a, const_expr(e)))
    return elems


def _chain(elems: list) -> Expr:
    node = elems[0]
    for el in elems[1:]:
        node = Mul(node, el)
    return node


def build(p: Poly) -> Expr:
    if not p:
        return Const(0)
    node = None
    for m in sorted(p, key=mono_key):
        c = p[m]
        neg = c < 0
        elems = _term_elems(m, -c if neg else c)
        if node is None:
            if neg:
                elems[0] = _negate_elem(elems[0])
            node = _chain(elems)
        else:
            node = Sub(node, _chain(elems)) if neg else Add(node, _chain(elems))
    return node


def simplify(e: Expr) -> Expr:
    """Rewrite ``e`` to its canonical form.

    Folds constants, applies 0/1 identities, expands and collects like
    monomials, and orders operands deterministically (alphabet order for
    variables, printed form for other atoms).  Idempotent.

    Raises
    ------
    DomainError
        On division by a subexpression that simplifies to zero.
    """
    return build(normalize(e))


# ---------------------------------------------------------------------------
# zero testing


class ZeroStatus(str, Enum):
    ZERO = "provably-zero"
    NONZERO = "provably-nonzero"
    UNKNOWN = "unknown"


ZERO_SAMPLE_SEED = 20_240_611
_SAMPLE_ATTEMPTS = 6


def _eval_exact(e: Expr, point: dict):
    if isinstance(e, Const):
        if not isinstance(e.value, Fraction):
            raise TypeError
        return e.value
    if isinstance(e, Var):
        return point[e.name]
    if isinstance(e, Neg):
        return -_eval_exact(e.arg, point)
    if isinstance(e, Add):
        return _eval_exact(e.left, point) + _eval_exact(e.right, point)
    if isinstance(e, Sub):
        return _eval_exact(e.left, point) - _eval_exact(e.right, point)
    if isinstance(e, Mul):
        return _eval_exact(e.left, point) * _eval_exact(e.right, point)
    if isinstance(e, Div):
        return _eval_exact(e.left, point) / _eval_exact(e.right, point)
    if isinstance(e, Pow):
        q = _eval_exact(e.right, point)
        if q.denominator != 1 or abs(q) > 64:
            raise TypeError
        return _eval_exact(e.left, point) ** int(q)
    raise TypeError


def sample_points(names, count: int, seed: int = ZERO_SAMPLE_SEED):
    """Deterministic rational points in (1/2, 3/2) for the given variables."""
    rng = np.random.default_rng(seed)
    names = sorted(names, key=var_rank)
    pts = []
    for _ in range(count):
        pts.append(
            {n: Fraction(1, 2) + Fraction(int(rng.integers(1, 999_983)), 999_983) for n in names}
        )
    return pts


def is_zero(e: Expr) -> ZeroStatus:
    """Three-valued zero test.

    ``ZERO`` only when ``simplify`` reaches the literal 0.  ``NONZERO``
    when some deterministic rational sample evaluates to more than 1e-9
    in magnitude (and clearly above floating-point cancellation noise).
    ``UNKNOWN`` otherwise.
    """
    from .calculus import evaluate

    try:
        s = simplify(e)
    except DomainError:
        return ZeroStatus.UNKNOWN
    if isinstance(s, Const) and s.value == 0:
        return ZeroStatus.ZERO
    names = free_vars(s)
    for point in sample_points(names, _SAMPLE_ATTEMPTS):
        try:
            v = _eval_exact(s, point)
            if abs(v) > Fraction(1, 10**9):
                return ZeroStatus.NONZERO
            continue
        except (TypeError, ZeroDivisionError):
            pass
        fpoint = {k: float(v) for k, v in point.items()}
        try:
            v = evaluate(s, fpoint)
            scale = _magnitude(s, fpoint)
        except EvaluationError:
            continue
        if abs(v) > 1e-9 and abs(v) > 1e-10 * scale:
            return ZeroStatus.NONZERO
    return ZeroStatus.UNKNOWN


def _magnitude(s: Expr, point) -> float:
    """Sum of |top-level term| values, a floor for cancellation noise."""
    from .calculus import evaluate

    total = 0.0
    for m, c in normalize(s).items():
        total += abs(evaluate(build({m: c}), point))
    return total


# ---------------------------------------------------------------------------
# polynomial views


def polynomial_terms(e: Expr, variables) -> dict:
    """Exponent-tuple -> coefficient map of a polynomial in ``variables``.

    Raises ``NonPolynomialError`` if ``e`` has non-polynomial structure or
    any variable outside ``variables``.
    """
    variables = tuple(variables)
    index = {v: i for i, v in enumerate(variables)}
    out = {}
    for m, c in normalize(e).items():
        exps = [0] * len(variables)
        for a, k in m:
            if not isinstance(a, Var):
                raise NonPolynomialError(f"non-polynomial factor {to_string(a)}")
            if a.name not in index:
                raise NonPolynomialError(f"unexpected variable {a.name!r}")
            if k.denominator != 1 or k < 0:
                raise NonPolynomialError(f"non-polynomial power {a.name}^{k}")
            exps[index[a.name]] = int(k)
        out[tuple(exps)] = c
    return out


def is_polynomial(e: Expr, variables=None) -> bool:
    if variables is None:
        variables = sorted(free_vars(e), key=var_rank)
    try:
        polynomial_terms(e, variables)
    except NonPolynomialError:
        return False
    return True


def has_float(e: Expr) -> bool:
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Const) and isinstance(node.value, float):
            return True
        stack.extend(node.children())
    return False
