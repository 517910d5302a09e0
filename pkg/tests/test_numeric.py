import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from ocnoether.cases import ball_mizel_closed_form, ball_mizel_problem, get_case
from ocnoether.errors import FitError, QuadratureError, ShootingError
from ocnoether.numeric.diagnosis import diagnose_pmp
from ocnoether.numeric.powerlaw import fit_exponent
from ocnoether.numeric.quadrature import QuadratureSpec, graded_grid, integrate
from ocnoether.numeric.shooting import ShootingSpec, control_from_maximality, solve_extremal
from ocnoether.problem import (
    Boundary,
    OCProblem,
    Trajectory,
    dhdt_gap,
    pmp_control_residual,
    pmp_maximality_residual,
)
from ocnoether.symbolic import VarAlphabet, parse

A1 = VarAlphabet.canonical(1, 1)


def P(text):
    return parse(text, A1)


def problem(L, phi="u1", xb=1.0, name="test"):
    return OCProblem(1, 1, 0, 1, P(L), (P(phi),), (Boundary(0.0, xb),), name)


# -- quadrature ------------------------------------------------------------------


def test_singular_power_with_graded_mesh():
    r = integrate(lambda t: t ** (-1 / 3), 0.0, 1.0, QuadratureSpec.graded(("a",)))
    assert abs(r.value - 1.5) <= 1e-8
    assert r.converged
    assert "graded" in r.mesh


def test_sine_integral():
    r = integrate(lambda t: np.sin(np.pi * t), 0.0, 1.0)
    assert abs(r.value - 2 / math.pi) <= 1e-10


def test_zero_integrand_exact():
    assert integrate(lambda t: np.zeros_like(t), 0.0, 1.0).value == 0.0


def test_reversed_and_empty_intervals():
    f = lambda t: t**2  # noqa: E731
    assert integrate(f, 1.0, 0.0).value == pytest.approx(-1 / 3, abs=1e-14)
    assert integrate(f, 0.5, 0.5).value == 0.0


def test_nonfinite_integrand_reports_location():
    with pytest.raises(QuadratureError) as exc:
        integrate(lambda t: 1.0 / (t - 0.5) ** 2 * np.where(t > 0.4, np.inf, 1.0), 0.0, 1.0)
    assert exc.value.location is not None and exc.value.location > 0.4


def test_simpson_fallback_on_smooth_integrand():
    r = integrate(lambda t: np.exp(t), 0.0, 1.0, QuadratureSpec(method="simpson", panels=256))
    assert abs(r.value - (math.e - 1)) <= 1e-10


def test_spec_validation():
    for kw in ({"method": "trapz"}, {"abs_tol": 0}, {"grading": 0.5}, {"singular": ("c",)}):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)


def test_graded_grid_shape():
    g = graded_grid(0.0, 1.0, 512, 3.0, ("a",))
    assert g[0] == 0.0 and g[-1] == 1.0 and g.size == 513
    assert g[1] == pytest.approx(512.0**-3)
    both = graded_grid(0.0, 1.0, 8, 2.0, ("a", "b"))
    assert np.allclose(both, 1 - both[::-1])


@settings(max_examples=50)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=10))
def test_polynomials_up_to_degree_nine_exact(coeffs):
    c = np.array(coeffs, dtype=float)
    exact = sum(ck / (k + 1) for k, ck in enumerate(c))
    r = integrate(lambda t: np.polynomial.polynomial.polyval(t, c), 0.0, 1.0)
    assert abs(r.value - exact) <= 1e-12 * max(1.0, np.abs(c).sum())


# -- control_from_maximality ---------------------------------------------------------


def test_maximality_free_particle_one_step():
    cs = control_from_maximality(problem("u1^2"), 0.3, 0.0, 2.6)
    assert cs.u[0] == pytest.approx(1.3, abs=1e-15)
    assert cs.iterations == 1 and not cs.flags


def test_maximality_quartic():
    psi = 5.0
    cs = control_from_maximality(problem("u1^4"), 0.0, 0.0, psi, guess=1.0)
    assert cs.u[0] == pytest.approx((psi / 4) ** (1 / 3), rel=1e-10)
    assert cs.residual <= 1e-10


def test_maximality_concave_cost_flagged():
    cs = control_from_maximality(problem("-u1^2"), 0.0, 0.0, 2.0)
    assert cs.u[0] == pytest.approx(-1.0)
    assert any("not a maximum" in f for f in cs.flags)


# -- solve_extremal -------------------------------------------------------------------


def test_shoot_free_particle():
    tr = solve_extremal(problem("u1^2"))
    assert tr.metadata["psi_a"][0] == pytest.approx(2.0, abs=1e-8)
    assert np.max(np.abs(tr.u[:, 0] - 1.0)) <= 1e-8
    assert np.max(np.abs(tr.x[:, 0] - tr.grid)) <= 1e-8


def test_shoot_lq_matches_closed_form():
    case = get_case("lq")
    tr = solve_extremal(case.problem)
    x, u, psi = case.closed_form.columns(tr.grid)
    assert np.max(np.abs(tr.x[:, 0] - x)) <= 1e-6
    assert np.max(np.abs(tr.u[:, 0] - u)) <= 1e-6
    assert np.max(np.abs(tr.psi[:, 0] - psi)) <= 1e-6


@pytest.mark.parametrize("name", ["freeparticle", "lq", "noninv"])
def test_shoot_postconditions_and_dhdt_gap(name):
    p = get_case(name).problem
    tr = solve_extremal(p)
    assert np.max(np.abs(pmp_control_residual(p, tr))) <= 1e-6
    assert np.max(np.abs(pmp_maximality_residual(p, tr))) <= 1e-8
    assert abs(tr.x[-1, 0] - p.boundary[0].b) <= 1e-6
    assert np.max(np.abs(dhdt_gap(p, tr))) <= 1e-6


@settings(max_examples=8)
@given(st.floats(-2, 2), st.floats(0.1, 3))
def test_shoot_output_always_meets_postconditions(xb, weight):
    p = problem(f"u1^2 + {weight!r}*x1^2", xb=xb)
    try:
        tr = solve_extremal(p)
    except ShootingError:
        return
    assert np.max(np.abs(pmp_control_residual(p, tr))) <= 1e-6
    assert np.max(np.abs(pmp_maximality_residual(p, tr))) <= 1e-8
    assert abs(tr.x[-1, 0] - xb) <= 1e-6
    assert np.max(np.abs(dhdt_gap(p, tr))) <= 1e-6


def test_shoot_ball_mizel_fails_near_zero():
    with pytest.raises(ShootingError) as exc:
        solve_extremal(get_case("ballmizel-k2").problem)
    assert exc.value.t_fail is not None and exc.value.t_fail < 1e-3
    assert "breakdown near t=" in str(exc.value)


def test_shoot_needs_fixed_endpoints():
    p = OCProblem(1, 1, 0, 1, P("u1^2"), (P("u1"),), (Boundary(0.0, None),), "free-end")
    with pytest.raises(ShootingError):
        solve_extremal(p)


def test_shooting_spec_validation():
    with pytest.raises(ValueError):
        ShootingSpec(rtol=0)
    with pytest.raises(ValueError):
        ShootingSpec(damping=1.5)


# -- fit_exponent -----------------------------------------------------------------------


def ball_mizel_coefficient(k):
    # oracle: -dH/dx along x = k t^(2/3), u = (2k/3) t^(-1/3), leading coefficient
    t, x, u = sympy.symbols("t x u", positive=True)
    L = (x**3 - t**2) ** 2 * u**14 + sympy.Rational(1, 1000) * u**2
    g = sympy.diff(L, x).subs({x: k * t ** sympy.Rational(2, 3), u: sympy.Rational(2 * k, 3) * t ** sympy.Rational(-1, 3)})
    return sympy.simplify(g * t ** sympy.Rational(4, 3))


def test_ball_mizel_coefficient_oracle():
    c = ball_mizel_coefficient(2)
    assert c == 6 * 4 * 7 * sympy.Rational(4, 3) ** 14
    assert float(c) == pytest.approx(9428.7, rel=1e-4)


def test_fit_ball_mizel_adjoint_samples():
    t = np.logspace(-6, -3, 40)
    rep = fit_exponent(t, 9428.0 * t ** (-4 / 3))
    assert rep.alpha == pytest.approx(-4 / 3, abs=0.01)
    assert not rep.integrable and rep.classification == "non-integrable"
    assert rep.coefficient == pytest.approx(9428.0, rel=1e-8)


def test_fit_multiplier_samples():
    t = np.logspace(-6, -3, 40)
    rep = fit_exponent(t, t ** (-1 / 3))
    assert rep.alpha == pytest.approx(-1 / 3, abs=0.01)
    assert rep.integrable


def test_fit_constant_series():
    t = np.logspace(-6, -3, 20)
    rep = fit_exponent(t, np.full_like(t, -3.0))
    assert rep.alpha == 0.0 and rep.integrable
    assert rep.coefficient == pytest.approx(-3.0)


def test_fit_borderline():
    t = np.logspace(-6, -3, 20)
    assert fit_exponent(t, 1 / t).classification == "borderline"


def test_fit_about_right_endpoint():
    t = 1 - np.logspace(-6, -3, 20)
    rep = fit_exponent(t, (1 - t) ** -2, t0=1.0)
    assert rep.alpha == pytest.approx(-2.0, abs=1e-9)


@pytest.mark.parametrize("t,v", [
    (np.logspace(-6, -3, 5), np.ones(5)),
    (np.linspace(1e-3, 2e-3, 20), np.ones(20)),
    (np.logspace(-6, -3, 20), np.where(np.arange(20) % 2, 1.0, -1.0)),
    (np.logspace(-6, -3, 20), np.r_[0.0, np.ones(19)]),
    (np.logspace(-6, -3, 20), np.r_[np.nan, np.ones(19)]),
])
def test_fit_errors(t, v):
    with pytest.raises(FitError):
        fit_exponent(t, v)


@settings(max_examples=60)
@given(st.sampled_from([-2.0, -4 / 3, -1.0, -1 / 3, 0.0, 0.5]),
       st.floats(1e-3, 1e4), st.booleans())
def test_fit_recovers_pure_power_laws(alpha, c, negative):
    t = np.logspace(-6, -3, 40)
    sign = -1.0 if negative else 1.0
    rep = fit_exponent(t, sign * c * t**alpha)
    assert abs(rep.alpha - alpha) <= 0.005 * max(abs(alpha), 1e-9) + 1e-12
    assert rep.coefficient == pytest.approx(sign * c, rel=1e-6)


# -- diagnose_pmp ---------------------------------------------------------------------------


def test_diagnose_ball_mizel_k2():
    case = get_case("ballmizel-k2")
    d = diagnose_pmp(case.problem, case.trajectory())
    assert d.verdict == "PMP-fails-adjoint"
    assert d.alpha("a") == pytest.approx(-4 / 3, abs=0.05)
    assert d.alpha("a", quantity="multiplier") == pytest.approx(-1 / 3, abs=0.05)
    assert "verdict: PMP-fails-adjoint" in d.text()


def test_diagnose_ball_mizel_k1_degenerate():
    case = get_case("ballmizel-k1")
    d = diagnose_pmp(case.problem, case.trajectory())
    assert d.verdict == "PMP-consistent"
    assert d.adjoint_zero == [True]


def test_diagnose_free_particle():
    case = get_case("freeparticle")
    assert diagnose_pmp(case.problem, case.trajectory()).verdict == "PMP-consistent"


@pytest.mark.parametrize("k", [3, 0.5])
def test_diagnose_exponent_independent_of_k(k):
    p = ball_mizel_problem(k, name="bm")
    cf = ball_mizel_closed_form(p, k)
    grid = graded_grid(1e-6, 1.0, 2000, 3.0, ("a",))
    tr = Trajectory.from_closed_form(cf, grid, (0.0, 1.0), ("a",))
    d = diagnose_pmp(p, tr)
    assert d.verdict == "PMP-fails-adjoint"
    assert d.alpha("a") == pytest.approx(-4 / 3, abs=0.05)


def test_diagnose_sampled_trajectory():
    case = get_case("lq")
    tr = solve_extremal(case.problem)
    assert diagnose_pmp(case.problem, tr).verdict == "PMP-consistent"
