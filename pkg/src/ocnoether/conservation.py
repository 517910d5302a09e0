"""Conservation laws psi.X - H T: pointwise and weak verification.

The weak law asks that the integral of C*theta' vanish for every test
function theta vanishing at the window ends.  It only needs C to be
integrable, so it can be checked on minimizers whose multipliers are too
rough for the pointwise statement.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .numeric.quadrature import QuadratureSpec, integrate
from .problem import OCProblem, Trajectory
from .symbolic import Const, Expr, Var, compile_expr, differentiate, evaluate, simplify
from .symbolic.normal import const_expr
from .symmetry import Generators, _identity_lhs

DEFAULT_TOL_CLOSED = 1e-7
DEFAULT_TOL_SHOT = 1e-5


@dataclass(frozen=True)
class ConservationLaw:
    """C = psi.X - H T for a generator set."""

    C: Expr
    generators: Generators | None = None
    problem: OCProblem | None = None

    def __str__(self):
        return str(self.C)


def conservation_law(gen: Generators, p: OCProblem) -> ConservationLaw:
    gen.check_dims(p)
    C = -p.hamiltonian.H * gen.T
    for i in range(p.n):
        C = C + Var(p.costates[i]) * gen.X[i]
    return ConservationLaw(simplify(C), gen, p)


def law_from_expr(C: Expr) -> ConservationLaw:
    return ConservationLaw(simplify(C))


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """theta(t) and its derivative, vanishing at the window ends."""

    theta: Expr
    dtheta: Expr
    family: str
    k: int
    window: tuple

    __test__ = False  # not a pytest class

    def __post_init__(self):
        a, b = self.window
        for end in (a, b):
            v = evaluate(self.theta, {"t": end})
            if abs(v) > 1e-12:
                raise ValueError(f"test function {self.family}:{self.k} is {v:.3g} at t={end}")

    def negated(self) -> "TestFunction":
        return TestFunction(simplify(-self.theta), simplify(-self.dtheta), self.family, self.k,
                            self.window)

    @classmethod
    def from_expr(cls, theta: Expr, window, family="custom", k=1) -> "TestFunction":
        return cls(theta, differentiate(theta, "t"), family, k, tuple(window))


def _num(v: float) -> Expr:
    # exact when the window ends are short decimals, else the float itself
    f = Fraction(repr(float(v)))
    return const_expr(f if f.denominator < 10**12 else float(v))


def test_basis(family: str, count: int, window) -> list:
    """``poly-bump``: (t-a)(b-t)((t-a)/(b-a))^(k-1); ``sine``: sin(k pi (t-a)/(b-a))."""
    if count < 1:
        raise ValueError("count must be >= 1")
    a, b = float(window[0]), float(window[1])
    if not a < b:
        raise ValueError(f"invalid window [{a}, {b}]")
    t = Var("t")
    A, B = _num(a), _num(b)
    s = (t - A) / (B - A)
    out = []
    for k in range(1, count + 1):
        if family == "poly-bump":
            th = (t - A) * (B - t) * (s ** (k - 1) if k > 1 else Const(1))
        elif family == "sine":
            th = _sine(k, s)
        else:
            raise ValueError(f"unknown test family {family!r}")
        th = simplify(th)
        out.append(TestFunction(th, differentiate(th, "t"), family, k, (a, b)))
    return out


def _sine(k, s):
    from .symbolic import sin

    # k*pi kept as a float constant: the grammar has no pi symbol
    return sin(Const(k * math.pi) * s)


def parse_basis(spec: str, window) -> list:
    """``"sine:10"`` or ``"poly-bump:5"``; several joined by commas."""
    out = []
    for part in spec.split(","):
        fam, _, cnt = part.strip().partition(":")
        out.extend(test_basis(fam, int(cnt) if cnt else 10, window))
    return out


# ---------------------------------------------------------------------------
# pointwise verification


@dataclass
class PointwiseReport:
    constant: float
    max_deviation: float
    passed: bool
    tol: float
    n_points: int
    n_domain_errors: int
    values: np.ndarray = field(repr=False, default=None)

    def text(self):
        return (
            f"pointwise: c = {self.constant:.12g}, max |C - c|/max(1,|c|) = {self.max_deviation:.3e}, "
            f"tol = {self.tol:.1e}, points = {self.n_points}, domain errors = {self.n_domain_errors}"
            f" -> {'PASS' if self.passed else 'FAIL'}"
        )


def verify_pointwise(tr: Trajectory, law: ConservationLaw, tol: float = DEFAULT_TOL_CLOSED) -> PointwiseReport:
    """C on the grid; c is the grid mean."""
    b = tr.grid_values()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(compile_expr(law.C)(b), tr.grid.shape).astype(float)
    ok = np.isfinite(vals)
    good = vals[ok]
    if good.size == 0:
        return PointwiseReport(float("nan"), float("inf"), False, tol, 0, int((~ok).sum()), vals)
    c = float(np.mean(good))
    dev = float(np.max(np.abs(good - c)) / max(1.0, abs(c)))
    return PointwiseReport(c, dev, dev <= tol, tol, int(ok.sum()), int((~ok).sum()), vals)


# ---------------------------------------------------------------------------
# weak verification


def verification_window(tr: Trajectory):
    """Window of the weak law and a note on any shrinkage.

    Defaults to the horizon, shrunk by 1e-6 of its length at singular
    endpoints; sampled trajectories never extend beyond their grid.
    """
    a, b = tr.horizon
    shrink = 1e-6 * (b - a)
    lo = a + shrink if "a" in tr.singular else a
    hi = b - shrink if "b" in tr.singular else b
    if tr.closed_form is None:
        lo, hi = max(lo, tr.window[0]), min(hi, tr.window[1])
    notes = []
    if lo > a:
        notes.append(f"left end shrunk by {lo - a:.3g} (singular endpoint)")
    if hi < b:
        notes.append(f"right end shrunk by {b - hi:.3g}")
    return (lo, hi), notes


def _quad_spec(tr: Trajectory, window):
    if tr.closed_form is not None:
        return QuadratureSpec.graded(tr.singular) if tr.singular else QuadratureSpec()
    inside = np.sum((tr.grid > window[0]) & (tr.grid < window[1]))
    return QuadratureSpec(panels=int(max(16, min(inside + 1, 2048))), max_subdivisions=8192)


@dataclass
class WeakResult:
    family: str
    k: int
    residual: float
    scale: float
    normalized: float
    passed: bool
    quad_error: float = 0.0
    converged: bool = True


def _weak_integrals(tr, law, theta, window, spec):
    fC = compile_expr(law.C)
    fd = compile_expr(theta.dtheta)

    def integrand(t):
        return fC(tr.values(t)) * fd({"t": t})

    def absolute(t):
        return np.abs(fC(tr.values(t))) * np.abs(fd({"t": t}))

    r = integrate(integrand, window[0], window[1], spec)
    s = integrate(absolute, window[0], window[1], spec)
    return r, s


def weak_residual(tr: Trajectory, law: ConservationLaw, theta: TestFunction, window=None) -> float:
    """Integral of C*theta' over the verification window."""
    window = window or theta.window
    r, _ = _weak_integrals(tr, law, theta, window, _quad_spec(tr, window))
    return r.value


@dataclass
class WeakReport:
    results: list
    tol: float
    window: tuple
    notes: list
    mesh: str = ""
    max_quad_error: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_normalized(self) -> float:
        return max(r.normalized for r in self.results)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "k", "residual", "scale", "normalized", "pass"])
        for r in self.results:
            w.writerow([r.family, r.k, f"{r.residual:.17g}", f"{r.scale:.17g}",
                        f"{r.normalized:.17g}", "true" if r.passed else "false"])
        return buf.getvalue()

    def verdict_text(self) -> str:
        n_pass = sum(r.passed for r in self.results)
        lines = [
            f"weak law: {'PASS' if self.passed else 'FAIL'} ({n_pass}/{len(self.results)} test functions)",
            f"window: [{self.window[0]:.12g}, {self.window[1]:.12g}]",
            f"tolerance (normalized): {self.tol:.1e}",
            f"max normalized residual: {self.max_normalized:.3e}",
            f"max quadrature error estimate: {self.max_quad_error:.3e}",
            f"mesh: {self.mesh}",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def verify_weak(tr: Trajectory, law: ConservationLaw, basis, tol: float = DEFAULT_TOL_CLOSED) -> WeakReport:
    """Weak residuals over ``basis``; pass iff normalized <= tol."""
    basis = list(basis)
    if not basis:
        raise ValueError("empty test-function basis")
    window = basis[0].window
    if any(th.window != window for th in basis):
        raise ValueError("all test functions must share one window")
    a, b = tr.horizon
    if window[0] < a - 1e-15 or window[1] > b + 1e-15:
        raise ValueError("test-function window leaves the trajectory horizon")
    if tr.closed_form is None and (window[0] < tr.window[0] - 1e-12 or window[1] > tr.window[1] + 1e-12):
        raise ValueError("test-function window leaves the sampled grid")
    _, notes = verification_window(tr)
    spec = _quad_spec(tr, window)
    results = []
    mesh = ""
    qerr = 0.0
    for th in basis:
        r, s = _weak_integrals(tr, law, th, window, spec)
        mesh = r.mesh
        qerr = max(qerr, r.error)
        scale = s.value
        if scale > 0:
            normalized = abs(r.value) / scale
        else:
            normalized = 0.0 if r.value == 0 else float("inf")
        results.append(WeakResult(th.family, th.k, r.value, scale, normalized,
                                  normalized <= tol, r.error, r.converged))
    return WeakReport(results, tol, window, notes, mesh, qerr)


def default_basis(tr: Trajectory, family="sine", count=10):
    window, _ = verification_window(tr)
    return test_basis(family, count, window)


# ---------------------------------------------------------------------------
# duBois-Reymond self-test


@dataclass
class DuBoisReymondResult:
    family: str
    k: int
    lhs: float
    rhs: float
    difference: float
    passed: bool


def dubois_reymond_check(g: Expr, basis, tol: float = 1e-8) -> list:
    """Integral of g*theta' against minus the integral of g'*theta."""
    dg = differentiate(g, "t")
    fg, fdg = compile_expr(g), compile_expr(dg)
    out = []
    for th in basis:
        ft, fdt = compile_expr(th.theta), compile_expr(th.dtheta)
        a, b = th.window
        lhs = integrate(lambda t: fg({"t": t}) * fdt({"t": t}), a, b).value
        rhs = -integrate(lambda t: fdg({"t": t}) * ft({"t": t}), a, b).value
        diff = abs(lhs - rhs)
        out.append(DuBoisReymondResult(th.family, th.k, lhs, rhs, diff, diff <= tol))
    return out


# ---------------------------------------------------------------------------
# proof replay blocks


@dataclass
class ProofReplay:
    """Integrals of the two proof blocks and the combined identity.

    ``block_a``: integral of (-H_t T - H T')theta - (psi.X) theta'.
    ``block_b``: integral of (H_t T + H T')theta + (H T) theta'.
    Their sum is the integral of (H T - psi.X) theta', i.e. minus the
    weak residual.  ``reparam`` integrates the reparameterised identity.
    """

    block_a: float
    block_b: float
    reparam: float
    weak: float

    @property
    def block_sum(self):
        return self.block_a + self.block_b


def proof_blocks(p: OCProblem, gen: Generators, tr: Trajectory, theta: TestFunction) -> ProofReplay:
    from .symmetry import reparam_invariance_residual, total_time_derivative

    gen.check_dims(p)
    H = p.hamiltonian
    th, dth = theta.theta, theta.dtheta
    dT = total_time_derivative(gen.T, p)
    psiX = Const(0)
    for i in range(p.n):
        psiX = psiX + Var(p.costates[i]) * gen.X[i]
    time_part = H.H_t * gen.T + H.H * dT
    block_a = simplify(-time_part * th - psiX * dth)
    block_b = simplify(time_part * th + H.H * gen.T * dth)
    reparam = reparam_invariance_residual(p, gen, theta)
    window = theta.window
    spec = _quad_spec(tr, window)

    def quad(e):
        e = simplify(e)
        if e == Const(0):
            return 0.0
        f = compile_expr(e)

        def g(t):
            b = tr.values(t)
            b.update(tr.rates(t))
            return f(b)

        return integrate(g, window[0], window[1], spec).value

    law = conservation_law(gen, p)
    return ProofReplay(quad(block_a), quad(block_b), quad(reparam),
                       weak_residual(tr, law, theta, window))


def pointwise_identity(p: OCProblem, gen: Generators) -> Expr:
    """The invariance identity left-hand side (free of theta)."""
    return _identity_lhs(p, gen)

