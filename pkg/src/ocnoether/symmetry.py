"""Transformation groups, infinitesimal generators and invariance checks.

A problem is invariant under a group h^s when

    d/ds { H(h^s) * d(h_t)/dt - h_psi . d(h_x)/dt } at s = 0

vanishes, which expands to the identity

    H_t T + H_x.X + H_u.U + H_psi.Psi - Psi.xdot - psi.dX/dt + H dT/dt = 0.

Along trajectories xdot is replaced by phi; udot and psidot stay formal
symbols whose coefficients must vanish separately.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .errors import DimensionError, NonPolynomialError
from .linalg import nullspace_float, nullspace_rational
from .problem import OCProblem, Trajectory, control_names, costate_names, rate_name, state_names
from .symbolic import (
    Const,
    Expr,
    Var,
    ZeroStatus,
    as_expr,
    compile_expr,
    differentiate,
    free_vars,
    has_float,
    is_zero,
    polynomial_terms,
    simplify,
    substitute,
)
from .symbolic.calculus import replace
from .symbolic.normal import const_expr

ZERO = Const(0)


def _phase_vars(n, m):
    return ["t"] + state_names(n) + control_names(m) + costate_names(n)


@dataclass(frozen=True)
class Generators:
    """Infinitesimal generators (T, X, U, Psi) over (t, x, u, psi)."""

    T: Expr
    X: tuple
    U: tuple
    Psi: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "T", simplify(as_expr(self.T)))
        for name in ("X", "U", "Psi"):
            object.__setattr__(self, name, tuple(simplify(as_expr(e)) for e in getattr(self, name)))
        if len(self.Psi) != len(self.X):
            raise DimensionError("Psi must have as many components as X")
        allowed = set(_phase_vars(self.n, self.m))
        for e in self.components():
            extra = free_vars(e) - allowed
            if extra:
                raise DimensionError(f"generator uses variables outside (t, x, u, psi): {sorted(extra)}")

    @property
    def n(self):
        return len(self.X)

    @property
    def m(self):
        return len(self.U)

    def components(self):
        return (self.T,) + self.X + self.U + self.Psi

    def scaled(self, c) -> "Generators":
        c = as_expr(c)
        return Generators(c * self.T, tuple(c * e for e in self.X), tuple(c * e for e in self.U),
                          tuple(c * e for e in self.Psi), self.label)

    def times(self, theta: Expr) -> "Generators":
        """Generators of the group with s replaced by s*theta(t)."""
        return self.scaled(theta)

    def check_dims(self, p: OCProblem):
        if (self.n, self.m) != (p.n, p.m):
            raise DimensionError(
                f"generators are for n={self.n}, m={self.m} but the problem has n={p.n}, m={p.m}"
            )

    @classmethod
    def zero(cls, n, m, label=""):
        return cls(ZERO, (ZERO,) * n, (ZERO,) * m, (ZERO,) * n, label)

    def __str__(self):
        parts = [f"T = {self.T}"]
        parts += [f"X{i + 1} = {e}" for i, e in enumerate(self.X)]
        parts += [f"U{j + 1} = {e}" for j, e in enumerate(self.U)]
        parts += [f"Psi{i + 1} = {e}" for i, e in enumerate(self.Psi)]
        return ", ".join(parts)


def time_translation(n, m) -> Generators:
    return Generators(Const(1), (ZERO,) * n, (ZERO,) * m, (ZERO,) * n, "time translation")


def state_translation(n, m, i=1) -> Generators:
    X = tuple(Const(1) if k == i - 1 else ZERO for k in range(n))
    return Generators(ZERO, X, (ZERO,) * m, (ZERO,) * n, f"state translation x{i}")


@dataclass(frozen=True)
class GroupAction:
    """One-parameter family h^s acting on (t, x, u, psi); identity at s = 0."""

    h_t: Expr
    h_x: tuple
    h_u: tuple
    h_psi: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "h_t", as_expr(self.h_t))
        for name in ("h_x", "h_u", "h_psi"):
            object.__setattr__(self, name, tuple(as_expr(e) for e in getattr(self, name)))
        n, m = len(self.h_x), len(self.h_u)
        if len(self.h_psi) != n:
            raise DimensionError("h_psi must have as many components as h_x")
        allowed = set(_phase_vars(n, m)) | {"s"}
        for e in self.components():
            extra = free_vars(e) - allowed
            if extra:
                raise DimensionError(f"group uses variables outside (t, x, u, psi, s): {sorted(extra)}")
        self._check_identity()

    @property
    def n(self):
        return len(self.h_x)

    @property
    def m(self):
        return len(self.h_u)

    def components(self):
        return (self.h_t,) + self.h_x + self.h_u + self.h_psi

    def _check_identity(self):
        names = _phase_vars(self.n, self.m)
        rng = np.random.default_rng(7)
        for comp, base in zip(self.components(), names):
            at0 = substitute(comp, {"s": 0})
            if at0 == Var(base):
                continue
            # numeric fallback: 50 random points
            f = compile_expr(simplify(at0 - Var(base)), "math")
            for _ in range(50):
                pt = {v: float(rng.uniform(0.5, 1.5)) for v in names}
                try:
                    val = f(pt)
                except (ValueError, ZeroDivisionError, OverflowError):
                    continue
                if abs(val) > 1e-10:
                    raise ValueError(f"group is not the identity at s=0 in component {base}: {at0}")

    def reparameterize(self, theta: Expr) -> "GroupAction":
        """Replace s by s*theta(t)."""
        sub = {"s": Var("s") * as_expr(theta)}
        return GroupAction(
            replace(self.h_t, sub),
            tuple(replace(e, sub) for e in self.h_x),
            tuple(replace(e, sub) for e in self.h_u),
            tuple(replace(e, sub) for e in self.h_psi),
            self.label,
        )

    @classmethod
    def linear_flow(cls, gen: Generators) -> "GroupAction":
        """First-order flow identity + s*generator."""
        s = Var("s")
        names = _phase_vars(gen.n, gen.m)
        comps = [Var(v) + s * g for v, g in zip(names, gen.components())]
        n, m = gen.n, gen.m
        return cls(comps[0], tuple(comps[1:1 + n]), tuple(comps[1 + n:1 + n + m]),
                   tuple(comps[1 + n + m:]), gen.label)


def reparameterize(g: GroupAction, theta: Expr) -> GroupAction:
    return g.reparameterize(theta)


def generators_from_group(g: GroupAction) -> Generators:
    """Derivatives of the group components at s = 0."""
    gens = [simplify(substitute(differentiate(c, "s"), {"s": 0})) for c in g.components()]
    n, m = g.n, g.m
    return Generators(gens[0], tuple(gens[1:1 + n]), tuple(gens[1 + n:1 + n + m]),
                      tuple(gens[1 + n + m:]), g.label)


def exact_flow(gen: Generators) -> GroupAction:
    """Exact flow of a diagonal-affine generator.

    Every component must have the form alpha*z + beta with rational
    constants, z the matching base variable; the flow is then
    z -> e^(alpha s) z + beta (e^(alpha s) - 1)/alpha (or z + beta s).
    """
    s = Var("s")
    names = _phase_vars(gen.n, gen.m)
    comps = []
    for z, g in zip(names, gen.components()):
        if free_vars(g) - {z}:
            raise ValueError(f"generator component for {z} is not diagonal: {g}")
        terms = polynomial_terms(g, [z]) if free_vars(g) else {(0,): _const_value(g)}
        if any(k[0] > 1 for k in terms):
            raise ValueError(f"generator component for {z} is not affine: {g}")
        alpha = terms.get((1,), 0)
        beta = terms.get((0,), 0)
        Z = Var(z)
        if alpha == 0:
            comps.append(Z + const_expr(beta) * s)
        else:
            e = Var("s") * const_expr(alpha)
            from .symbolic import exp

            grow = exp(e)
            comps.append(grow * Z + const_expr(beta) * (grow - 1) / const_expr(alpha))
    n, m = gen.n, gen.m
    return GroupAction(comps[0], tuple(comps[1:1 + n]), tuple(comps[1 + n:1 + n + m]),
                       tuple(comps[1 + n + m:]), gen.label)


def _const_value(e):
    s = simplify(e)
    if isinstance(s, Const):
        return s.value
    return float(compile_expr(s, "math")({}))


# ---------------------------------------------------------------------------
# total derivatives and the invariance identity


def total_time_derivative(e: Expr, p: OCProblem, mode: str = "on-dynamics") -> Expr:
    """Chain-rule d/dt of ``e`` along trajectories.

    In ``"on-dynamics"`` mode xdot_i is replaced by phi_i and udot_j,
    psidot_i appear as formal symbols; in ``"free"`` mode every rate is
    formal.
    """
    if mode not in ("on-dynamics", "free"):
        raise ValueError(f"unknown mode {mode!r}")
    out = differentiate(e, "t")
    for i, xv in enumerate(p.states):
        d = differentiate(e, xv)
        if d != ZERO:
            out = out + d * (p.phi[i] if mode == "on-dynamics" else Var(rate_name(xv)))
    for v in p.controls + p.costates:
        d = differentiate(e, v)
        if d != ZERO:
            out = out + d * Var(rate_name(v))
    return simplify(out)


def formal_rate_names(p: OCProblem):
    return [rate_name(v) for v in p.controls + p.costates]


@dataclass
class InvarianceResidual:
    """Residual of the invariance identity.

    ``expr`` is the full simplified left-hand side.  ``components`` maps
    ``"base"`` to the part free of formal rates and each formal rate name
    (``udot1``, ``psidot1`` ...) to its coefficient.
    """

    expr: Expr
    components: dict

    def nonzero_components(self):
        return {k: v for k, v in self.components.items() if v != ZERO}


def _identity_lhs(p: OCProblem, gen: Generators, mode="on-dynamics") -> Expr:
    H = p.hamiltonian
    out = H.H_t * gen.T
    for i in range(p.n):
        xdot = p.phi[i] if mode == "on-dynamics" else Var(rate_name(p.states[i]))
        out = out + H.H_x[i] * gen.X[i] + H.H_psi[i] * gen.Psi[i] - gen.Psi[i] * xdot
        out = out - Var(p.costates[i]) * total_time_derivative(gen.X[i], p, mode)
    for j in range(p.m):
        out = out + H.H_u[j] * gen.U[j]
    out = out + H.H * total_time_derivative(gen.T, p, mode)
    return simplify(out)


def invariance_residual(p: OCProblem, gen: Generators) -> InvarianceResidual:
    """Left-hand side of the invariance identity with xdot = phi.

    The result is linear in the formal rates, so their coefficients are
    exact partial derivatives and the base part is the rest at zero rates.
    """
    gen.check_dims(p)
    expr = _identity_lhs(p, gen)
    rates = [r for r in formal_rate_names(p) if r in free_vars(expr)]
    comps = {"base": substitute(expr, {r: 0 for r in rates}) if rates else expr}
    for r in formal_rate_names(p):
        comps[r] = differentiate(expr, r) if r in rates else ZERO
    return InvarianceResidual(expr, comps)


@dataclass
class InvarianceVerdict:
    verdict: str
    residual: InvarianceResidual
    statuses: dict = field(default_factory=dict)

    @property
    def invariant(self):
        return self.verdict == "invariant"


def check_invariance(p: OCProblem, gen: Generators) -> InvarianceVerdict:
    """``invariant`` iff every residual component is provably zero.

    ``not-invariant`` if any component is provably nonzero, else
    ``undecided``.
    """
    res = invariance_residual(p, gen)
    statuses = {k: is_zero(v) for k, v in res.components.items()}
    if all(s is ZeroStatus.ZERO for s in statuses.values()):
        verdict = "invariant"
    elif any(s is ZeroStatus.NONZERO for s in statuses.values()):
        verdict = "not-invariant"
    else:
        verdict = "undecided"
    return InvarianceVerdict(verdict, res, statuses)


# ---------------------------------------------------------------------------
# finite-s numeric check


@dataclass
class FiniteSReport:
    max_discrepancy: float
    max_relative: float
    n_points: int
    n_skipped: int
    numeric: np.ndarray
    symbolic: np.ndarray
    times: np.ndarray

    def passed(self, tol=1e-6):
        return self.n_points > 0 and self.max_relative <= tol


def _def1_quantity(p: OCProblem, g: GroupAction):
    """Compiled pieces of Q(s) = H(h^s) dh_t/dt - h_psi . dh_x/dt."""
    dt = total_time_derivative(g.h_t, p, "free")
    dx = [total_time_derivative(e, p, "free") for e in g.h_x]
    comps = [compile_expr(simplify(c)) for c in g.components()]
    return compile_expr(p.hamiltonian.H), comps, compile_expr(dt), [compile_expr(e) for e in dx]


def random_phase_points(p: OCProblem, count: int, seed: int = 12345, low=0.5, high=1.5):
    """Random points in (t, x, u, psi, udot, psidot) with xdot = phi."""
    rng = np.random.default_rng(seed)
    names = _phase_vars(p.n, p.m) + formal_rate_names(p)
    pts = {v: rng.uniform(low, high, count) for v in names}
    pts["t"] = p.a + (p.b - p.a) * rng.uniform(0.05, 0.95, count)
    for i, xv in enumerate(p.states):
        pts[rate_name(xv)] = np.broadcast_to(compile_expr(p.phi[i])(pts), (count,)).astype(float)
    return pts


def check_invariance_finite_s(p: OCProblem, gen_or_group, tr: Trajectory | None = None,
                              s_grid=(-1e-4, 1e-4), times=None, points=None,
                              count: int = 100) -> FiniteSReport:
    """Cross-check the symbolic residual against the group definition by numeric d/ds.

    The group-action quantity is evaluated at each sample point for every s in
    ``s_grid`` and its derivative at s = 0 is taken from a polynomial fit
    (central difference for two symmetric points).  Sample points come
    from ``tr`` (at ``times``, default the interior grid) or, without a
    trajectory, from ``points`` / ``random_phase_points``.  Points where
    either side is non-finite are skipped and counted.
    """
    s_grid = np.unique(np.asarray(s_grid, dtype=float))
    if s_grid.size < 2:
        raise ValueError("s-grid needs at least 2 distinct points")
    if isinstance(gen_or_group, GroupAction):
        g = gen_or_group
        gen = generators_from_group(g)
    else:
        gen = gen_or_group
        g = GroupAction.linear_flow(gen)
    gen.check_dims(p)
    if (g.n, g.m) != (p.n, p.m):
        raise DimensionError("group dimensions do not match the problem")

    if tr is not None:
        tt = tr.grid[1:-1] if times is None else np.asarray(times, dtype=float)
        b = tr.values(tt)
        b.update(tr.rates(tt))
    else:
        b = dict(points) if points is not None else random_phase_points(p, count)
        tt = np.asarray(b["t"])
    b = {k: np.asarray(v, dtype=float) for k, v in b.items()}

    Hf, comps, dtf, dxf = _def1_quantity(p, g)
    names = _phase_vars(p.n, p.m)
    Q = []
    with np.errstate(all="ignore"):
        for s in s_grid:
            bs = dict(b)
            bs["s"] = np.full_like(tt, s)
            moved = {v: np.broadcast_to(f(bs), tt.shape) for v, f in zip(names, comps)}
            Hs = np.broadcast_to(Hf(moved), tt.shape)
            q = Hs * np.broadcast_to(dtf(bs), tt.shape)
            for i in range(p.n):
                q = q - moved[f"psi{i + 1}"] * np.broadcast_to(dxf[i](bs), tt.shape)
            Q.append(q)
    Q = np.array(Q)
    deg = min(len(s_grid) - 1, 4)
    V = np.vander(s_grid, deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, Q, rcond=None)
    numeric = coef[1]

    res = invariance_residual(p, gen).expr
    with np.errstate(all="ignore"):
        symbolic = np.broadcast_to(compile_expr(res)(b), tt.shape).astype(float)
    ok = np.isfinite(numeric) & np.isfinite(symbolic)
    diff = np.abs(numeric - symbolic)[ok]
    rel = diff / np.maximum(1.0, np.abs(symbolic[ok]))
    return FiniteSReport(
        float(diff.max()) if diff.size else float("nan"),
        float(rel.max()) if rel.size else float("nan"),
        int(ok.sum()),
        int((~ok).sum()),
        numeric,
        symbolic,
        tt,
    )


# ---------------------------------------------------------------------------
# generator solver


DEFAULT_MONOMIAL_CAP = 20_000


def _monomials(variables, degree):
    """Exponent tuples of total degree <= degree, ordered by degree then variable rank."""
    k = len(variables)
    out = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), d):
            e = [0] * k
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    # within a degree, prefer earlier variables with higher powers
    out.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return out


def _mono_expr(variables, exps) -> Expr:
    e: Expr = Const(1)
    for v, k in zip(variables, exps):
        if k:
            e = e * (Var(v) if k == 1 else Var(v) ** k)
    return simplify(e)


def solve_generators(p: OCProblem, degree: int, cap: int = DEFAULT_MONOMIAL_CAP,
                     include_psi: bool = False) -> list:
    """Basis of polynomial generators of total degree <= ``degree``.

    Unknown coefficients multiply every monomial of each of T, X_i, U_j;
    the residual of the invariance identity is expanded and every
    monomial coefficient in (t, x, u, psi, udot, psidot) set to zero.

    Psi drops out of the identity because dH/dpsi = phi = xdot, so any
    Psi solves it; the default basis therefore fixes Psi = 0
    (``include_psi=True`` keeps those trivial directions).

    Raises
    ------
    ValueError
        ``degree < 0``.
    NonPolynomialError
        Problem data not polynomial.
    OverflowError
        Ansatz monomial count above ``cap``.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    base_vars = ["t"] + p.states + p.controls
    for label, e in [("L", p.L)] + [(f"phi{i + 1}", f) for i, f in enumerate(p.phi)]:
        try:
            polynomial_terms(e, base_vars)
        except NonPolynomialError as exc:
            raise NonPolynomialError(f"{label} is not polynomial: {exc}") from None

    variables = _phase_vars(p.n, p.m)
    per_comp = comb(len(variables) + degree, degree)
    n_comp = 1 + p.n + p.m + (p.n if include_psi else 0)
    if per_comp * n_comp > cap:
        raise OverflowError(f"ansatz needs {per_comp * n_comp} monomials, cap is {cap}")
    monos = _monomials(variables, degree)

    # one column per (component, monomial); the residual is linear in them
    columns = []
    for ci in range(n_comp):
        for exps in monos:
            columns.append((ci, exps))

    res_vars = variables + formal_rate_names(p)
    col_terms = []
    row_index = {}
    exact = not (has_float(p.L) or any(has_float(f) for f in p.phi))
    for ci, exps in columns:
        gen = _unit_generator(p, ci, _mono_expr(variables, exps))
        expr = invariance_residual(p, gen).expr
        terms = polynomial_terms(expr, res_vars)
        for key in terms:
            row_index.setdefault(key, len(row_index))
        col_terms.append(terms)
        if any(isinstance(c, float) for c in terms.values()):
            exact = False
    if len(row_index) > cap:
        raise OverflowError(f"residual has {len(row_index)} monomials, cap is {cap}")

    nrows, ncols = len(row_index), len(columns)
    if exact:
        rows = [[Fraction(0)] * ncols for _ in range(nrows)]
        for j, terms in enumerate(col_terms):
            for key, c in terms.items():
                rows[row_index[key]][j] = Fraction(c)
        basis = nullspace_rational(rows, ncols)
    else:
        A = np.zeros((nrows, ncols))
        for j, terms in enumerate(col_terms):
            for key, c in terms.items():
                A[row_index[key], j] = float(c)
        basis = nullspace_float(A)

    out = []
    for vec in basis:
        first = next(c for c in vec if c != 0)
        vec = [c / first for c in vec]
        comps = [ZERO] * (1 + 2 * p.n + p.m)
        for (ci, exps), c in zip(columns, vec):
            if c == 0:
                continue
            coef = const_expr(c) if isinstance(c, Fraction) else Const(float(c))
            comps[ci] = comps[ci] + coef * _mono_expr(variables, exps)
        out.append(_assemble(p, comps, label=f"solved degree {degree}"))
    return out


def _unit_generator(p: OCProblem, ci: int, mono: Expr) -> Generators:
    comps = [ZERO] * (1 + 2 * p.n + p.m)
    comps[ci] = mono
    return _assemble(p, comps)


def _assemble(p: OCProblem, comps, label=""):
    n, m = p.n, p.m
    return Generators(comps[0], tuple(comps[1:1 + n]), tuple(comps[1 + n:1 + n + m]),
                      tuple(comps[1 + n + m:]), label)


# ---------------------------------------------------------------------------
# proof replay


def reparam_invariance_residual(p: OCProblem, gen: Generators, theta) -> Expr:
    """(identity terms)*theta + (H T - psi.X)*theta' as an expression.

    ``theta`` is a TestFunction (anything with ``theta``/``dtheta``
    expressions in t) or a bare expression in t.
    """
    th, dth = _theta_pair(theta)
    gen.check_dims(p)
    H = p.hamiltonian.H
    flux = H * gen.T
    for i in range(p.n):
        flux = flux - Var(p.costates[i]) * gen.X[i]
    return simplify(_identity_lhs(p, gen) * th + flux * dth)


def _theta_pair(theta):
    if hasattr(theta, "theta"):
        return as_expr(theta.theta), as_expr(theta.dtheta)
    th = as_expr(theta)
    return th, differentiate(th, "t")
