"""Integrability diagnosis of the adjoint system along a candidate minimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..errors import EvaluationError, FitError
from ..problem import OCProblem, Trajectory, along
from ..symbolic import ZeroStatus, compile_expr, is_zero, simplify, substitute, to_string
from .powerlaw import DEFAULT_MARGIN, SingularityReport, fit_exponent

# relative distances to the endpoint used for the log-log fits
FIT_DECADES = (1e-6, 1e-3)
FIT_SAMPLES = 40
RECONSTRUCTION_TOL = 1e-6


@dataclass
class EndpointFit:
    """Exponent fit of one series component near one horizon endpoint."""

    quantity: str
    component: int
    endpoint: str
    t0: float
    status: str
    report: SingularityReport | None = None
    note: str = ""

    def row(self) -> str:
        if self.report is None:
            return f"{self.quantity:<10} {self.component:>4} {self.endpoint:>4} {self.t0:>10.4g} {'-':>10} {'-':>8}  {self.status} {self.note}".rstrip()
        r = self.report
        return (f"{self.quantity:<10} {self.component:>4} {self.endpoint:>4} {self.t0:>10.4g} "
                f"{r.alpha:>10.5f} {r.r_squared:>8.5f}  {self.status}")


@dataclass
class Diagnosis:
    """Outcome of ``diagnose_pmp``.

    ``verdict`` is one of "PMP-consistent", "PMP-fails-adjoint" or
    "inconclusive".  It depends on the adjoint right-hand side only; the
    maximality check with a reconstructed multiplier and the multiplier
    exponent fits are reported alongside for information.
    """

    verdict: str
    adjoint_fits: list
    multiplier_fits: list
    adjoint_exprs: list = field(default_factory=list)
    adjoint_zero: list = field(default_factory=list)
    reconstruction_residual: float | None = None
    reconstruction_ok: bool | None = None
    notes: list = field(default_factory=list)

    def alpha(self, endpoint="a", component=1, quantity="adjoint") -> float | None:
        fits = self.adjoint_fits if quantity == "adjoint" else self.multiplier_fits
        for f in fits:
            if f.endpoint == endpoint and f.component == component and f.report is not None:
                return f.report.alpha
        return None

    def text(self) -> str:
        lines = ["quantity   comp  end         t0      alpha      R^2  status"]
        lines += [f.row() for f in self.adjoint_fits + self.multiplier_fits]
        for i, (e, z) in enumerate(zip(self.adjoint_exprs, self.adjoint_zero), start=1):
            if e is not None:
                lines.append(f"-dH/dx{i} along the trajectory: {to_string(e)}" + ("  (identically zero)" if z else ""))
        if self.reconstruction_residual is not None:
            ok = "ok" if self.reconstruction_ok else "fails"
            lines.append(f"maximality with reconstructed multiplier: max |dH/du| = "
                         f"{self.reconstruction_residual:.3g} ({ok}, informational)")
        lines += [f"note: {n}" for n in self.notes]
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def _probe_times(a, b, endpoint):
    d = np.logspace(np.log10(FIT_DECADES[0]), np.log10(FIT_DECADES[1]), FIT_SAMPLES) * (b - a)
    return a + d if endpoint == "a" else b - d


def _fit_component(values_at, quantity, comp, endpoint, t0, times, margin, singular):
    """Fit one component; regular endpoints with a finite limit count as bounded."""
    try:
        v = values_at(times)
    except EvaluationError as exc:
        return EndpointFit(quantity, comp, endpoint, t0, "inconclusive", note=str(exc))
    try:
        rep = fit_exponent(times, v, t0=t0, margin=margin)
    except FitError as exc:
        if not singular and np.all(np.isfinite(v)):
            return EndpointFit(quantity, comp, endpoint, t0, "bounded", note=f"(no fit: {exc})")
        return EndpointFit(quantity, comp, endpoint, t0, "inconclusive", note=str(exc))
    return EndpointFit(quantity, comp, endpoint, t0, rep.classification, rep)


def _sample_times(tr: Trajectory, endpoint):
    """Grid samples within the fit decades of an endpoint (sampled data)."""
    a, b = tr.horizon
    t0 = a if endpoint == "a" else b
    d = np.abs(tr.grid - t0)
    keep = (d > 0) & (d <= FIT_DECADES[1] * (b - a) * 10)
    return tr.grid[keep]


def diagnose_pmp(p: OCProblem, tr: Trajectory, margin: float = DEFAULT_MARGIN) -> Diagnosis:
    """Judge whether the adjoint system can hold along ``tr``.

    The required costate rate g = -dH/dx is evaluated along the
    trajectory.  With a closed form, g is first simplified symbolically;
    a provably zero component needs no fit.  Otherwise the local power
    law of g is fitted at t = e +- d (b - a), d in [1e-6, 1e-3], for each
    horizon endpoint e.  Any exponent below -1 - margin means the adjoint
    right-hand side is not integrable and the verdict is
    "PMP-fails-adjoint".  Borderline exponents or failed fits at a
    singular endpoint give "inconclusive".
    """
    H = p.hamiltonian
    a, b = tr.horizon
    gs = [simplify(-h) for h in H.H_x]
    cf = tr.closed_form
    notes = []

    adjoint_exprs, zero_flags, evaluators = [], [], []
    for g in gs:
        if cf is not None:
            binding = dict(zip(p.states + p.controls + p.costates, cf.x + cf.u + cf.psi))
            gt = substitute(g, binding)
            z = is_zero(gt) is ZeroStatus.ZERO
            f = compile_expr(gt)
            evaluators.append(lambda t, f=f: np.broadcast_to(f({"t": t}), np.shape(t)).astype(float))
            adjoint_exprs.append(gt)
            zero_flags.append(z)
        else:
            evaluators.append(lambda t, g=g: along(g, tr, t))
            adjoint_exprs.append(None)
            zero_flags.append(False)

    adjoint_fits = []
    for endpoint, t0 in (("a", a), ("b", b)):
        singular = endpoint in tr.singular
        if cf is not None:
            times = _probe_times(a, b, endpoint)
        else:
            times = _sample_times(tr, endpoint)
            if tr.window[0 if endpoint == "a" else 1] != t0:
                singular = True
        for i, (g_at, z) in enumerate(zip(evaluators, zero_flags), start=1):
            if z:
                adjoint_fits.append(EndpointFit("adjoint", i, endpoint, t0, "zero", note="identically zero"))
                continue
            adjoint_fits.append(_fit_component(g_at, "adjoint", i, endpoint, t0, times, margin, singular))

    # exponents of the trajectory's own multiplier near singular endpoints
    multiplier_fits = []
    for endpoint in tr.singular:
        t0 = a if endpoint == "a" else b
        times = _probe_times(a, b, endpoint) if cf is not None else _sample_times(tr, endpoint)
        for i in range(p.n):
            at = lambda t, i=i: tr.values(t)[f"psi{i + 1}"]  # noqa: E731
            multiplier_fits.append(_fit_component(at, "multiplier", i + 1, endpoint, t0, times, margin, True))

    statuses = [f.status for f in adjoint_fits]
    if "non-integrable" in statuses:
        verdict = "PMP-fails-adjoint"
    elif any(s in ("borderline", "inconclusive") for s in statuses):
        verdict = "inconclusive"
    else:
        verdict = "PMP-consistent"

    rec, ok = None, None
    if verdict != "PMP-fails-adjoint":
        try:
            rec = _reconstruction_residual(p, tr, evaluators)
            ok = rec <= RECONSTRUCTION_TOL
        except EvaluationError as exc:
            notes.append(f"multiplier reconstruction failed: {exc}")
        if ok is False:
            notes.append("the trajectory's multiplier is not an adjoint solution; "
                         "the verdict concerns integrability of the adjoint right-hand side only")
    if tr.metadata.get("excluded_radius"):
        notes.append(f"samples exclude a radius {tr.metadata['excluded_radius']:.3g} around singular endpoints")
    return Diagnosis(verdict, adjoint_fits, multiplier_fits, adjoint_exprs, zero_flags, rec, ok, notes)


def _reconstruction_residual(p: OCProblem, tr: Trajectory, evaluators) -> float:
    """max |dH/du| with psi rebuilt from psi(t_mid) + integral of g."""
    t = tr.grid
    vals = tr.grid_values()
    mid = t.size // 2
    for i, g_at in enumerate(evaluators):
        g = g_at(t)
        G = cumulative_trapezoid(g, t, initial=0.0)
        name = f"psi{i + 1}"
        vals[name] = vals[name][mid] + (G - G[mid])
    worst = 0.0
    for hu in p.hamiltonian.H_u:
        r = np.broadcast_to(compile_expr(hu)(vals), t.shape)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst
