"""Single shooting for Pontryagin extremals.

The control is eliminated pointwise from dH/du = 0 by damped Newton, the
state/costate system xdot = phi, psidot = -dH/dx is integrated with an
explicit Runge-Kutta 4(5) pair, and an outer Newton iteration on psi(a)
with a finite-difference Jacobian matches the terminal state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import NewtonError, ShootingError
from ..symbolic import compile_expr, simplify


@dataclass(frozen=True)
class ShootingSpec:
    """Settings for ``solve_extremal``.

    Parameters
    ----------
    psi_guess : sequence of float, optional
        Initial multiplier psi(a); zeros by default.
    rtol, atol : float
        Integrator tolerances.
    newton_tol : float
        Terminal-state residual (max norm) that stops the outer Newton.
    max_iter : int
        Outer Newton iterations.
    damping : float
        Initial step fraction in (0, 1]; halved on non-decrease.
    fd_step : float
        Relative finite-difference step for the shooting Jacobian.
    control_tol, control_max_iter
        Pointwise maximality solve settings.
    intervals : int
        Output grid size (uniform).
    """

    psi_guess: tuple | None = None
    rtol: float = 1e-11
    atol: float = 1e-12
    newton_tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0
    fd_step: float = 1e-6
    control_tol: float = 1e-12
    control_max_iter: int = 60
    intervals: int = 2000

    def __post_init__(self):
        for name in ("rtol", "atol", "newton_tol", "fd_step", "control_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")


@dataclass
class ControlSolution:
    u: np.ndarray
    residual: float
    iterations: int
    flags: list = field(default_factory=list)


class _Compiled:
    """Scalar-mode callables for H_u, H_uu, phi and -H_x."""

    def __init__(self, p):
        H = p.hamiltonian
        self.p = p
        self.names = ["t"] + p.states + p.controls + p.costates
        c = lambda e: compile_expr(simplify(e), "math")  # noqa: E731
        self.Hu = [c(e) for e in H.H_u]
        self.Huu = [[c(e) for e in row] for row in H.H_uu]
        self.phi = [c(e) for e in p.phi]
        self.adj = [c(-e) for e in H.H_x]

    def bind(self, t, x, u, psi):
        b = {"t": t}
        b.update(zip(self.p.states, x))
        b.update(zip(self.p.controls, u))
        b.update(zip(self.p.costates, psi))
        return b


def _newton_control(cp: _Compiled, t, x, psi, guess, tol, max_iter):
    u = np.array(guess, dtype=float)
    m = u.size
    flags = []

    def resid(uu):
        b = cp.bind(t, x, uu, psi)
        return np.array([f(b) for f in cp.Hu])

    try:
        r = resid(u)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise NewtonError(f"maximality residual not evaluable at t={t:.6g}: {exc}") from None
    for it in range(max_iter + 1):
        norm = float(np.max(np.abs(r)))
        if norm <= tol or (it > 0 and norm <= tol * max(1.0, float(np.max(np.abs(u))))):
            J = np.array([[f(cp.bind(t, x, u, psi)) for f in row] for row in cp.Huu])
            if np.any(np.linalg.eigvalsh(0.5 * (J + J.T)) >= 0):
                flags.append("dH/du = 0 is not a maximum of H in u (Hessian not negative definite)")
            return ControlSolution(u, norm, it, flags)
        if it == max_iter:
            break
        J = np.array([[f(cp.bind(t, x, u, psi)) for f in row] for row in cp.Huu]).reshape(m, m)
        if not np.all(np.isfinite(J)) or abs(np.linalg.det(J)) < 1e-300:
            raise NewtonError(
                f"singular d2H/du2 at t={t:.6g}: the problem looks degenerate at this point"
            )
        step = np.linalg.solve(J, r)
        lam = 1.0
        while True:
            cand = u - lam * step
            try:
                rc = resid(cand)
            except (ValueError, ZeroDivisionError, OverflowError):
                rc = np.full(m, np.inf)
            if np.all(np.isfinite(rc)) and np.max(np.abs(rc)) < norm or lam < 1e-8:
                break
            lam *= 0.5
        if not np.all(np.isfinite(rc)):
            break
        u, r = cand, rc
    raise NewtonError(f"maximality Newton did not converge at t={t:.6g} (|dH/du| = {norm:.3g})")


def control_from_maximality(p, t, x, psi, guess=None, tol: float = 1e-10,
                            max_iter: int = 60) -> ControlSolution:
    """Solve dH/du(t, x, u, psi) = 0 for u by damped Newton.

    Raises
    ------
    NewtonError
        On divergence or a singular second derivative.
    """
    cp = _compiled(p)
    guess = np.zeros(p.m) if guess is None else np.atleast_1d(np.asarray(guess, dtype=float))
    return _newton_control(cp, float(t), np.atleast_1d(x), np.atleast_1d(psi), guess, tol, max_iter)


_CACHE: dict = {}


def _compiled(p) -> _Compiled:
    key = id(p)
    hit = _CACHE.get(key)
    if hit is None or hit.p is not p:
        hit = _Compiled(p)
        _CACHE[key] = hit
    return hit


class _Breakdown(Exception):
    def __init__(self, t, why):
        self.t, self.why = t, why


def _flow(cp, p, psi0, spec, t_eval=None):
    n = p.n
    x0 = np.array([bd.a for bd in p.boundary], dtype=float)
    state = {"u": np.zeros(p.m)}

    def rhs(t, y):
        x, psi = y[:n], y[n:]
        try:
            sol = _newton_control(cp, t, x, psi, state["u"], spec.control_tol, spec.control_max_iter)
        except NewtonError as exc:
            raise _Breakdown(t, str(exc)) from None
        state["u"] = sol.u
        b = cp.bind(t, x, sol.u, psi)
        try:
            out = [f(b) for f in cp.phi] + [f(b) for f in cp.adj]
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise _Breakdown(t, f"right-hand side not evaluable: {exc}") from None
        return np.array(out)

    y0 = np.concatenate([x0, psi0])
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
            sol = solve_ivp(rhs, (p.a, p.b), y0, method="RK45", rtol=spec.rtol, atol=spec.atol,
                            t_eval=t_eval)
    except _Breakdown as exc:
        raise ShootingError(f"integration broke down at t={exc.t:.6g}: {exc.why}", exc.t) from None
    except FloatingPointError as exc:
        raise ShootingError(f"floating-point overflow during integration: {exc}", None) from None
    if sol.status != 0:
        t_fail = float(sol.t[-1])
        raise ShootingError(f"integrator failed at t={t_fail:.6g}: {sol.message}", t_fail)
    return sol


def _terminal_residual(cp, p, psi0, spec):
    sol = _flow(cp, p, psi0, spec)
    xb = sol.y[:p.n, -1]
    target = np.array([bd.b for bd in p.boundary], dtype=float)
    return xb - target


def solve_extremal(p, spec: ShootingSpec | None = None):
    """Pontryagin extremal by single shooting on psi(a).

    Returns a sampled ``Trajectory`` on a uniform grid with PMP residual
    metadata.  Either all post-conditions hold (|r_cs| <= 1e-6,
    |r_mc| <= 1e-8, terminal error <= 1e-6) or ``ShootingError`` is raised.

    Raises
    ------
    ShootingError
        Newton divergence or integrator breakdown; ``t_fail`` carries the
        breakdown time when known.  Problems with an endpoint singularity
        (Ball-Mizel type) typically end here.
    """
    from ..problem import Trajectory, pmp_control_residual, pmp_maximality_residual

    spec = spec or ShootingSpec()
    if not all(bd.fixed for bd in p.boundary):
        raise ShootingError("single shooting needs both endpoints fixed for every state")
    cp = _compiled(p)
    psi0 = np.zeros(p.n) if spec.psi_guess is None else np.asarray(spec.psi_guess, dtype=float)
    try:
        F = _terminal_residual(cp, p, psi0, spec)
    except ShootingError as exc:
        raise _annotate(exc) from None
    lam = spec.damping
    it = 0
    history = [float(np.max(np.abs(F)))]
    breakdowns = []

    def stalled(why):
        msg = f"shooting Newton {why} (terminal error {np.max(np.abs(F)):.3g} at psi(a) = {psi0.tolist()})"
        if breakdowns:
            t_fail = min(t for _, t in breakdowns)
            msg += (f"; trial multipliers up to psi(a) = {max(abs(q) for q, _ in breakdowns):.3g} "
                    f"broke down near t = {t_fail:.3g}")
            return _annotate(ShootingError(msg, t_fail))
        return ShootingError(msg)

    while np.max(np.abs(F)) > spec.newton_tol:
        if it >= spec.max_iter:
            raise stalled(f"did not converge in {spec.max_iter} iterations")
        if it >= 3 and history[-4] - history[-1] < 1e-3 * history[-4]:
            raise stalled("stalled: the terminal target looks unreachable")
        J = np.empty((p.n, p.n))
        for k in range(p.n):
            h = spec.fd_step * max(1.0, abs(psi0[k]))
            dp = psi0.copy()
            dp[k] += h
            try:
                J[:, k] = (_terminal_residual(cp, p, dp, spec) - F) / h
            except ShootingError as exc:
                raise _annotate(exc) from None
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            raise stalled("hit a singular Jacobian") from None
        # damped update with halving on non-decrease
        lam_k = lam
        while True:
            cand = psi0 - lam_k * step
            try:
                Fc = _terminal_residual(cp, p, cand, spec)
                ok = np.max(np.abs(Fc)) < np.max(np.abs(F))
            except ShootingError as exc:
                if exc.t_fail is not None:
                    breakdowns.append((float(np.max(np.abs(cand))), exc.t_fail))
                ok = False
            if ok:
                break
            lam_k *= 0.5
            if lam_k < 1e-3:
                raise stalled("stalled in the line search")
        psi0, F = cand, Fc
        history.append(float(np.max(np.abs(F))))
        it += 1

    grid = np.linspace(p.a, p.b, spec.intervals + 1)
    sol = _flow(cp, p, psi0, spec, t_eval=grid)
    x = sol.y[:p.n].T
    psi = sol.y[p.n:].T
    u = np.empty((grid.size, p.m))
    guess = np.zeros(p.m)
    flags = set()
    for j, t in enumerate(grid):
        cs = _newton_control(cp, t, x[j], psi[j], guess, spec.control_tol, spec.control_max_iter)
        u[j] = guess = cs.u
        flags.update(cs.flags)
    tr = Trajectory(grid, x, u, psi, None, (p.a, p.b), (), {
        "source": "shooting",
        "psi_a": psi0.tolist(),
        "newton_iterations": it,
        "newton_history": history,
        "flags": sorted(flags),
    })
    target = np.array([bd.b for bd in p.boundary], dtype=float)
    terminal = float(np.max(np.abs(x[-1] - target)))
    rcs = float(np.max(np.abs(pmp_control_residual(p, tr))))
    rmc = float(np.max(np.abs(pmp_maximality_residual(p, tr))))
    tr.metadata.update({"terminal_error": terminal, "max_rcs": rcs, "max_rmc": rmc})
    if terminal > 1e-6 or rcs > 1e-6 or rmc > 1e-8:
        raise ShootingError(
            f"extremal failed its post-conditions: terminal {terminal:.3g}, "
            f"|r_cs| {rcs:.3g}, |r_mc| {rmc:.3g}"
        )
    return tr


def _annotate(exc: ShootingError) -> ShootingError:
    if exc.t_fail is not None:
        msg = (f"{exc}; breakdown near t={exc.t_fail:.6g} is the expected behaviour for problems "
               "whose optimal control is unbounded at an endpoint")
        return ShootingError(msg, exc.t_fail)
    return exc
