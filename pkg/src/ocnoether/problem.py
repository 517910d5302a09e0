"""Optimal control problems, Hamiltonians, trajectories and PMP residuals.

The Hamiltonian follows the convention H = -L + psi.phi, so the
Pontryagin conditions read

    xdot = dH/dpsi,   psidot = -dH/dx,   dH/du = 0,

and along extremals dH/dt equals the partial derivative dH/dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DimensionError, DomainError, OCNoetherError
from .numeric.quadrature import QuadratureSpec, integrate
from .symbolic import (
    Const,
    Expr,
    Var,
    VarAlphabet,
    as_expr,
    compile_expr,
    differentiate,
    free_vars,
    simplify,
)
from .symbolic.expr import canonical_names


def state_names(n):
    return [f"x{i}" for i in range(1, n + 1)]


def control_names(m):
    return [f"u{j}" for j in range(1, m + 1)]


def costate_names(n):
    return [f"psi{i}" for i in range(1, n + 1)]


@dataclass(frozen=True)
class Boundary:
    """Endpoint data for one state; ``None`` means free."""

    a: float | None = None
    b: float | None = None

    @property
    def fixed(self) -> bool:
        return self.a is not None and self.b is not None


@dataclass(frozen=True, eq=False)
class OCProblem:
    """Minimise the integral of L(t, x, u) subject to xdot = phi(t, x, u).

    Controls are unrestricted.  Free endpoints are accepted for forward
    evaluation only (no transversality conditions).
    """

    n: int
    m: int
    a: float
    b: float
    L: Expr
    phi: tuple
    boundary: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DimensionError("need at least one state and one control")
        if not self.a < self.b:
            raise ValueError(f"horizon must satisfy a < b, got [{self.a}, {self.b}]")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "L", as_expr(self.L))
        object.__setattr__(self, "phi", tuple(as_expr(f) for f in self.phi))
        if len(self.phi) != self.n:
            raise DimensionError(f"{len(self.phi)} dynamics given for {self.n} states")
        bnd = tuple(self.boundary) or tuple(Boundary() for _ in range(self.n))
        if len(bnd) != self.n:
            raise DimensionError(f"{len(bnd)} boundary entries for {self.n} states")
        object.__setattr__(self, "boundary", bnd)
        allowed = {"t", *state_names(self.n), *control_names(self.m)}
        for label, e in [("L", self.L)] + [(f"phi{i + 1}", f) for i, f in enumerate(self.phi)]:
            extra = free_vars(e) - allowed
            if extra:
                raise DimensionError(f"{label} uses variables outside (t, x, u): {sorted(extra)}")

    @property
    def alphabet(self) -> VarAlphabet:
        return VarAlphabet(canonical_names(self.n, self.m))

    @property
    def states(self):
        return state_names(self.n)

    @property
    def controls(self):
        return control_names(self.m)

    @property
    def costates(self):
        return costate_names(self.n)

    @property
    def autonomous(self) -> bool:
        return "t" not in free_vars(self.L) and all("t" not in free_vars(f) for f in self.phi)

    @cached_property
    def hamiltonian(self) -> "Hamiltonian":
        return Hamiltonian(self)


class Hamiltonian:
    """H = -L + sum psi_i*phi_i with cached first partials.

    Attributes
    ----------
    H : Expr
    H_t : Expr
    H_x, H_u, H_psi : tuple of Expr
    """

    def __init__(self, p: OCProblem):
        self.problem = p
        raw = -p.L
        for i, f in enumerate(p.phi):
            raw = raw + Var(f"psi{i + 1}") * f
        self.H = simplify(raw)
        # structural check: H + L - psi.phi must reduce to zero
        check = self.H + p.L
        for i, f in enumerate(p.phi):
            check = check - Var(f"psi{i + 1}") * f
        if simplify(check) != Const(0):
            raise OCNoetherError("Hamiltonian failed its structural self-check")
        self.H_t = differentiate(self.H, "t")
        self.H_x = tuple(differentiate(self.H, v) for v in p.states)
        self.H_u = tuple(differentiate(self.H, v) for v in p.controls)
        self.H_psi = tuple(differentiate(self.H, v) for v in p.costates)

    @cached_property
    def H_uu(self):
        names = self.problem.controls
        return tuple(tuple(differentiate(h, v) for v in names) for h in self.H_u)

    def __repr__(self):
        return f"Hamiltonian({self.H})"


def hamiltonian(p: OCProblem) -> Hamiltonian:
    """Hamiltonian of ``p`` (cached on the problem)."""
    return p.hamiltonian


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class ClosedForm:
    """Analytic components of a trajectory as expressions in ``t``."""

    x: tuple
    u: tuple
    psi: tuple

    def __post_init__(self):
        for comp in ("x", "u", "psi"):
            exprs = tuple(as_expr(e) for e in getattr(self, comp))
            for e in exprs:
                if free_vars(e) - {"t"}:
                    raise ValueError(f"closed-form {comp} must depend on t only: {e}")
            object.__setattr__(self, comp, exprs)

    @cached_property
    def rates(self) -> "ClosedForm":
        d = lambda es: tuple(differentiate(e, "t") for e in es)  # noqa: E731
        return ClosedForm(d(self.x), d(self.u), d(self.psi))

    @cached_property
    def _compiled(self):
        return [compile_expr(e) for e in self.x + self.u + self.psi]

    def columns(self, t):
        t = np.asarray(t, dtype=float)
        out = []
        for f in self._compiled:
            out.append(np.broadcast_to(f({"t": t}), t.shape).astype(float))
        return out


@dataclass
class Trajectory:
    """Sampled (and optionally analytic) triple (x, u, psi) on a time grid.

    Parameters
    ----------
    grid : array of shape (N+1,)
        Strictly increasing sample times inside the horizon.
    x, u, psi : arrays of shape (N+1, n), (N+1, m), (N+1, n)
    closed_form : ClosedForm, optional
        When present, evaluation and derivatives are analytic.
    horizon : (a, b), optional
        The problem horizon; defaults to the grid ends.
    singular : tuple of {"a", "b"}
        Horizon endpoints where the data are not evaluable.
    metadata : dict
        Free-form provenance.  ``control_class`` / ``multiplier_class``
        record the function classes ("Linf", "L1", "W11").
    """

    grid: np.ndarray
    x: np.ndarray
    u: np.ndarray
    psi: np.ndarray
    closed_form: ClosedForm | None = None
    horizon: tuple | None = None
    singular: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 3:
            raise DimensionError("grid must be 1-D with at least 3 points")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        N1 = self.grid.size
        for name in ("x", "u", "psi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != N1:
                raise DimensionError(f"{name} has {arr.shape[0]} samples, grid has {N1}")
            setattr(self, name, arr)
        if self.psi.shape[1] != self.x.shape[1]:
            raise DimensionError("psi and x must have the same dimension")
        if self.horizon is None:
            self.horizon = (float(self.grid[0]), float(self.grid[-1]))
        a, b = self.horizon
        if self.grid[0] < a or self.grid[-1] > b:
            raise ValueError("grid leaves the horizon")
        self.singular = tuple(self.singular)
        self.metadata.setdefault("control_class", "L1" if self.singular else "Linf")
        if self.closed_form is not None:
            cf = self.closed_form
            if (len(cf.x), len(cf.u), len(cf.psi)) != (self.n, self.m, self.n):
                raise DimensionError("closed form dimensions do not match the samples")
            cols = cf.columns(self.grid)
            samples = np.hstack([self.x, self.u, self.psi])
            ref = np.column_stack(cols)
            dev = np.abs(samples - ref) / np.maximum(1.0, np.abs(ref))
            if not np.all(dev <= 1e-10):
                raise ValueError(f"samples disagree with the closed form (max {dev.max():.3g})")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_closed_form(cls, cf: ClosedForm, grid, horizon=None, singular=(), metadata=None):
        grid = np.asarray(grid, dtype=float)
        cols = cf.columns(grid)
        n, m = len(cf.x), len(cf.u)
        x = np.column_stack(cols[:n])
        u = np.column_stack(cols[n:n + m])
        psi = np.column_stack(cols[n + m:])
        return cls(grid, x, u, psi, cf, horizon, singular, dict(metadata or {}))

    # -- shape ------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def window(self) -> tuple:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def names(self):
        return state_names(self.n) + control_names(self.m) + costate_names(self.n)

    # -- evaluation -------------------------------------------------------

    @cached_property
    def _splines(self):
        data = np.hstack([self.x, self.u, self.psi])
        return CubicSpline(self.grid, data, axis=0)

    @cached_property
    def _rate_samples(self):
        data = np.hstack([self.x, self.u, self.psi])
        return np.gradient(data, self.grid, axis=0, edge_order=2)

    @cached_property
    def _rate_splines(self):
        return CubicSpline(self.grid, self._rate_samples, axis=0)

    def values(self, t) -> dict:
        """Bindings {t, x*, u*, psi*} at times ``t``."""
        t = np.asarray(t, dtype=float)
        if self.closed_form is not None:
            cols = self.closed_form.columns(t)
        else:
            data = self._splines(t)
            cols = [data[..., k] for k in range(data.shape[-1])]
        out = {"t": t}
        out.update(zip(self.names, cols))
        return out

    def rates(self, t=None) -> dict:
        """Bindings {xdot*, udot*, psidot*}.

        Analytic when a closed form is present.  Otherwise second-order
        central differences on the grid (one-sided at the ends); off-grid
        times interpolate those difference quotients.
        """
        names = [_dot(v) for v in self.names]
        if self.closed_form is not None:
            tt = self.grid if t is None else np.asarray(t, dtype=float)
            cols = self.closed_form.rates.columns(tt)
        elif t is None:
            cols = [self._rate_samples[:, k] for k in range(self._rate_samples.shape[1])]
        else:
            data = self._rate_splines(np.asarray(t, dtype=float))
            cols = [data[..., k] for k in range(data.shape[-1])]
        return dict(zip(names, cols))

    def grid_values(self) -> dict:
        out = {"t": self.grid}
        cols = np.hstack([self.x, self.u, self.psi])
        out.update({name: cols[:, k] for k, name in enumerate(self.names)})
        return out

    def bindings(self, t=None, rates=False) -> dict:
        b = self.grid_values() if t is None else self.values(t)
        if rates:
            b.update(self.rates(t))
        return b

    def quadrature_window(self, problem_horizon=None):
        """Integration window and spec for integrals along this trajectory.

        Closed forms integrate over the full horizon with the mesh graded
        towards singular endpoints; sampled data stay on the grid window.
        """
        if self.closed_form is not None:
            a, b = self.horizon
            if self.singular:
                return a, b, QuadratureSpec.graded(self.singular)
            return a, b, QuadratureSpec()
        a, b = self.window
        return a, b, QuadratureSpec(panels=max(16, min(self.grid.size - 1, 2048)),
                                    max_subdivisions=max(4000, 2 * self.grid.size))


def _dot(name: str) -> str:
    for prefix in ("psi", "x", "u"):
        if name.startswith(prefix):
            return f"{prefix}dot{name[len(prefix):]}"
    raise ValueError(name)


def rate_name(name: str) -> str:
    """``x1 -> xdot1``, ``u2 -> udot2``, ``psi1 -> psidot1``."""
    return _dot(name)


# ---------------------------------------------------------------------------
# evaluation helpers


def along(e: Expr, tr: Trajectory, t=None, rates=False) -> np.ndarray:
    """Evaluate ``e`` along ``tr`` at ``t`` (grid when None) as a float array.

    Raises DomainError if any sample is non-finite.
    """
    b = tr.bindings(t, rates=rates)
    shape = np.shape(b["t"])
    v = np.broadcast_to(compile_expr(e)(b), shape).astype(float)
    if not np.all(np.isfinite(v)):
        k = int(np.argmax(~np.isfinite(v)))
        raise DomainError(f"non-finite value at t={np.ravel(b['t'])[k]:.17g}", e)
    return v


def _series(exprs, tr, rates=False):
    return np.column_stack([along(e, tr, rates=rates) for e in exprs])


def _integrate_along(func, tr: Trajectory, spec: QuadratureSpec | None = None):
    a, b, default = tr.quadrature_window()
    return integrate(func, a, b, spec or default)


def cost(p: OCProblem, tr: Trajectory, spec: QuadratureSpec | None = None) -> float:
    """I[x, u] by quadrature of L along the trajectory."""
    f = compile_expr(p.L)
    res = _integrate_along(lambda t: f(tr.values(t)), tr, spec)
    return res.value


def augmented_cost(p: OCProblem, tr: Trajectory, spec: QuadratureSpec | None = None) -> float:
    """J[x, u, psi] = integral of H - psi.xdot."""
    integrand = p.hamiltonian.H
    for i in range(1, p.n + 1):
        integrand = integrand - Var(f"psi{i}") * Var(f"xdot{i}")
    f = compile_expr(integrand)

    def g(t):
        b = tr.values(t)
        b.update(tr.rates(t))
        return f(b)

    return _integrate_along(g, tr, spec).value


def pmp_control_residual(p: OCProblem, tr: Trajectory) -> np.ndarray:
    """xdot - dH/dpsi on the grid, shape (N+1, n)."""
    xdot = tr.rates()
    H = p.hamiltonian
    cols = [xdot[f"xdot{i + 1}"] - along(H.H_psi[i], tr) for i in range(p.n)]
    return np.column_stack(cols)


def pmp_adjoint_rhs(p: OCProblem, tr: Trajectory) -> np.ndarray:
    """Required psidot = -dH/dx on the grid, shape (N+1, n)."""
    return _series([simplify(-h) for h in p.hamiltonian.H_x], tr)


def pmp_maximality_residual(p: OCProblem, tr: Trajectory) -> np.ndarray:
    """dH/du on the grid, shape (N+1, m)."""
    return _series(p.hamiltonian.H_u, tr)


def total_rate_expr(e: Expr, p: OCProblem) -> Expr:
    """Chain-rule total time derivative with all rates kept formal."""
    out = differentiate(e, "t")
    for v in p.states + p.controls + p.costates:
        d = differentiate(e, v)
        if d != Const(0):
            out = out + d * Var(rate_name(v))
    return simplify(out)


def dhdt_gap(p: OCProblem, tr: Trajectory) -> np.ndarray:
    """Total dH/dt minus partial dH/dt on the grid."""
    H = p.hamiltonian
    total = along(total_rate_expr(H.H, p), tr, rates=True)
    return total - along(H.H_t, tr)


@dataclass(frozen=True)
class Variation:
    """Variation directions (h1, h2, h3) as expressions in ``t``."""

    h1: tuple
    h2: tuple
    h3: tuple

    def __post_init__(self):
        for name in ("h1", "h2", "h3"):
            exprs = tuple(as_expr(e) for e in getattr(self, name))
            for e in exprs:
                if free_vars(e) - {"t"}:
                    raise ValueError(f"variation {name} must depend on t only")
            object.__setattr__(self, name, exprs)

    def __add__(self, other: "Variation") -> "Variation":
        add = lambda u, v: tuple(simplify(a + b) for a, b in zip(u, v))  # noqa: E731
        return Variation(add(self.h1, other.h1), add(self.h2, other.h2), add(self.h3, other.h3))

    @classmethod
    def zero(cls, n, m):
        return cls((0,) * n, (0,) * m, (0,) * n)


def first_variation(p: OCProblem, tr: Trajectory, v: Variation,
                    spec: QuadratureSpec | None = None) -> float:
    """Directional derivative of J at epsilon = 0, without integrating by parts.

    Integrates H_x.h1 + H_u.h2 + H_psi.h3 - h3.xdot - psi.h1' over the
    trajectory window.
    """
    if (len(v.h1), len(v.h2), len(v.h3)) != (p.n, p.m, p.n):
        raise DimensionError("variation dimensions do not match the problem")
    from .symbolic import evaluate

    for h in v.h1:
        for end in (p.a, p.b):
            val = evaluate(h, {"t": end})
            if abs(val) > 1e-12:
                raise ValueError(f"h1 must vanish at the endpoints, got {val:.3g} at t={end}")
    H = p.hamiltonian
    integrand: Expr = Const(0)
    for i in range(p.n):
        xi, psi = Var(f"xdot{i + 1}"), Var(f"psi{i + 1}")
        integrand = integrand + H.H_x[i] * v.h1[i] + H.H_psi[i] * v.h3[i]
        integrand = integrand - v.h3[i] * xi - psi * differentiate(v.h1[i], "t")
    for j in range(p.m):
        integrand = integrand + H.H_u[j] * v.h2[j]
    integrand = simplify(integrand)
    if integrand == Const(0):
        return 0.0
    f = compile_expr(integrand)

    def g(t):
        b = tr.values(t)
        b.update(tr.rates(t))
        return f(b)

    return _integrate_along(g, tr, spec).value


def check_dimensions(p: OCProblem, tr: Trajectory):
    if (tr.n, tr.m) != (p.n, p.m):
        raise DimensionError(f"trajectory is ({tr.n}, {tr.m}) but problem is ({p.n}, {p.m})")
