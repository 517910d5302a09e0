from fractions import Fraction

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from ocnoether.cases import get_case
from ocnoether.errors import DimensionError
from ocnoether.problem import (
    Boundary,
    ClosedForm,
    OCProblem,
    Trajectory,
    Variation,
    augmented_cost,
    cost,
    dhdt_gap,
    first_variation,
    hamiltonian,
    pmp_adjoint_rhs,
    pmp_control_residual,
    pmp_maximality_residual,
)
from ocnoether.symbolic import VarAlphabet, ZeroStatus, differentiate, is_zero, parse, simplify, substitute

A1 = VarAlphabet.canonical(1, 1)


def P(text):
    return parse(text, A1)


def T(text):
    return parse(text, ["t"])


def traj(x, u, psi, n=400, a=0.0, b=1.0):
    cf = ClosedForm((T(x),), (T(u),), (T(psi),))
    return Trajectory.from_closed_form(cf, np.linspace(a, b, n + 1), (a, b))


FREE = OCProblem(1, 1, 0, 1, P("u1^2"), (P("u1"),), (Boundary(0, 1),), "free")


# -- Hamiltonian --------------------------------------------------------------


def test_hamiltonian_free_particle():
    H = hamiltonian(FREE)
    assert H.H == simplify(P("-u1^2 + psi1*u1"))
    assert H.H_u[0] == simplify(P("-2*u1 + psi1"))
    assert H.H_psi[0] == P("u1")


def test_hamiltonian_ball_mizel():
    p = get_case("ballmizel-k2").problem
    want = P("-(x1^3 - t^2)^2*u1^14 - 0.001*u1^2 + psi1*u1")
    assert is_zero(simplify(p.hamiltonian.H - want)) is ZeroStatus.ZERO


def test_problem_rejects_psi_in_data():
    with pytest.raises(DimensionError):
        OCProblem(1, 1, 0, 1, P("psi1*u1"), (P("u1"),))


def test_problem_rejects_bad_horizon_and_dims():
    with pytest.raises(ValueError):
        OCProblem(1, 1, 1, 0, P("u1^2"), (P("u1"),))
    with pytest.raises(DimensionError):
        OCProblem(2, 1, 0, 1, P("u1^2"), (P("u1"),))


def test_free_endpoint_stored():
    p = OCProblem(1, 1, 0, 1, P("u1^2"), (P("u1"),), (Boundary(0, None),))
    assert not p.boundary[0].fixed


# -- Trajectory ---------------------------------------------------------------


def test_trajectory_closed_form_agreement_enforced():
    cf = ClosedForm((T("t"),), (T("1"),), (T("2"),))
    grid = np.linspace(0, 1, 11)
    with pytest.raises(ValueError):
        Trajectory(grid, grid + 1e-6, np.ones(11), 2 * np.ones(11), cf)


def test_trajectory_shape_checks():
    grid = np.linspace(0, 1, 11)
    with pytest.raises(DimensionError):
        Trajectory(grid, np.zeros(10), np.zeros(11), np.zeros(11))
    with pytest.raises(ValueError):
        Trajectory(grid[::-1], np.zeros(11), np.zeros(11), np.zeros(11))


def test_sampled_rates_second_order():
    # np.gradient with edge_order=2 is exact on quadratics
    grid = np.linspace(0, 1, 51)
    tr = Trajectory(grid, grid ** 2, np.zeros(51), np.zeros(51))
    assert np.allclose(tr.rates()["xdot1"], 2 * grid, atol=1e-12)
    errs = []
    for n in (50, 100):
        g = np.linspace(0, 1, n + 1)
        t2 = Trajectory(g, g ** 3, np.zeros(n + 1), np.zeros(n + 1))
        errs.append(np.max(np.abs(t2.rates()["xdot1"] - 3 * g ** 2)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


# -- cost ---------------------------------------------------------------------


def test_cost_free_particle():
    assert cost(FREE, traj("t", "1", "2")) == pytest.approx(1.0, abs=1e-13)


def test_cost_zero_lagrangian():
    p = OCProblem(1, 1, 0, 1, P("0"), (P("u1"),))
    assert cost(p, traj("t", "1", "2")) == 0.0


def test_cost_ball_mizel_k1():
    case = get_case("ballmizel-k1")
    val = cost(case.problem, case.trajectory())
    eps = 0.001
    assert val == pytest.approx(eps * 4 / 3, rel=1e-9)
    # oracle: mpmath quadrature after t = s^3, which removes the singularity
    ref = mpmath.quad(lambda s: eps * (mpmath.mpf(2) / 3) ** 2 * s ** -2 * 3 * s ** 2, [0, 1])
    assert val == pytest.approx(float(ref), rel=1e-9)


def test_cost_ball_mizel_k2_sympy_oracle():
    case = get_case("ballmizel-k2")
    val = cost(case.problem, case.trajectory())
    t = sympy.Symbol("t", positive=True)
    k = 2
    x = k * t ** sympy.Rational(2, 3)
    u = sympy.diff(x, t)
    L = (x ** 3 - t ** 2) ** 2 * u ** 14 + sympy.Rational(1, 1000) * u ** 2
    ref = sympy.integrate(sympy.simplify(L), (t, 0, 1))
    assert val == pytest.approx(float(ref), rel=1e-9)


def test_augmented_cost_free_particle():
    assert augmented_cost(FREE, traj("t", "1", "2")) == pytest.approx(-1.0, abs=1e-13)


def test_augmented_cost_zero_multiplier():
    tr = traj("t^2", "2*t", "0")
    assert augmented_cost(FREE, tr) == pytest.approx(-cost(FREE, tr), abs=1e-13)


poly = st.lists(st.integers(-3, 3), min_size=1, max_size=4)


def _poly_text(cs):
    return " + ".join(f"({c})*t^{k}" for k, c in enumerate(cs))


@settings(max_examples=25)
@given(poly, poly, st.sampled_from(["free", "lq"]))
def test_feasible_augmented_is_minus_cost(cx, cpsi, which):
    p = FREE if which == "free" else get_case("lq").problem
    x = T(_poly_text(cx))
    u = differentiate(x, "t")
    cf = ClosedForm((x,), (u,), (T(_poly_text(cpsi)),))
    tr = Trajectory.from_closed_form(cf, np.linspace(0, 1, 101), (0, 1))
    I = cost(p, tr)
    assert augmented_cost(p, tr) == pytest.approx(-I, rel=1e-11, abs=1e-11)


# -- PMP residuals ------------------------------------------------------------


def test_free_particle_extremal_residuals():
    tr = traj("t", "1", "2")
    assert np.max(np.abs(pmp_control_residual(FREE, tr))) <= 1e-10
    assert np.max(np.abs(pmp_adjoint_rhs(FREE, tr))) == 0.0
    assert np.max(np.abs(pmp_maximality_residual(FREE, tr))) <= 1e-12
    assert np.max(np.abs(dhdt_gap(FREE, tr))) <= 1e-8


def test_control_residual_infeasible():
    assert np.allclose(pmp_control_residual(FREE, traj("t", "2", "2")), -1.0)


def test_maximality_residual_off_extremal():
    assert np.allclose(pmp_maximality_residual(FREE, traj("t", "0.5", "2")), 1.0)


@pytest.mark.parametrize("k", [1, 2])
def test_ball_mizel_closed_form_feasible(k):
    case = get_case(f"ballmizel-k{k}")
    cf = case.closed_form
    assert is_zero(simplify(differentiate(cf.x[0], "t") - cf.u[0])) is ZeroStatus.ZERO
    assert np.max(np.abs(pmp_control_residual(case.problem, case.trajectory()))) <= 1e-10


def test_ball_mizel_adjoint_rhs_coefficient():
    # oracle: sympy substitution of the closed form into -dH/dx
    t, x, u, psi = sympy.symbols("t x1 u1 psi1")
    eps = sympy.Rational(1, 1000)
    H = -(x ** 3 - t ** 2) ** 2 * u ** 14 - eps * u ** 2 + psi * u
    refs = {}
    for k in (1, 2):
        g_sym = -sympy.diff(H, x)
        refs[k] = sympy.simplify(g_sym.subs({x: k * t ** sympy.Rational(2, 3),
                                             u: sympy.Rational(2 * k, 3) * t ** sympy.Rational(-1, 3)}))
    assert refs[1] == 0
    case = get_case("ballmizel-k2")
    tr = case.trajectory()
    got = pmp_adjoint_rhs(case.problem, tr)[:, 0]
    want = np.array([float(refs[2].subs(t, tt)) for tt in tr.grid[::200]])
    assert np.allclose(got[::200], want, rtol=1e-12, atol=0)
    coeff = 6 * 2 ** 2 * (2 ** 3 - 1) * Fraction(4, 3) ** 14
    assert np.allclose(got, float(coeff) * tr.grid ** (-4 / 3), rtol=1e-12, atol=0)
    # k = 1: symbolically zero along the closed form
    c1 = get_case("ballmizel-k1")
    cf = c1.closed_form
    g1 = substitute(simplify(-c1.problem.hamiltonian.H_x[0]), {"x1": cf.x[0], "u1": cf.u[0]})
    assert is_zero(g1) is ZeroStatus.ZERO
    assert float(6 * 4 * 7 * Fraction(4, 3) ** 14) == pytest.approx(9428.0, rel=1e-3)


def test_ball_mizel_maximality_multiplier():
    case = get_case("ballmizel-k2")
    p, cf = case.problem, case.closed_form
    binding = {"x1": cf.x[0], "u1": cf.u[0], "psi1": cf.psi[0]}
    assert is_zero(substitute(p.hamiltonian.H_u[0], binding)) is ZeroStatus.ZERO
    r = pmp_maximality_residual(p, case.trajectory())
    assert np.max(np.abs(r / np.maximum(1, np.abs(case.trajectory().psi)))) <= 1e-12


def test_ball_mizel_dhdt_gap_nonzero():
    case = get_case("ballmizel-k2")
    tr = case.trajectory()
    gap = dhdt_gap(case.problem, tr)
    # the gap equals dH/dpsi*(psidot - g): psidot differs from -dH/dx
    psidot = tr.rates()["psidot1"]
    g = pmp_adjoint_rhs(case.problem, tr)[:, 0]
    assert np.max(np.abs(gap)) > 1.0
    assert np.allclose(gap, tr.u[:, 0] * (psidot - g), rtol=1e-9, atol=1e-9)


def test_autonomous_extremal_dhdt():
    tr = get_case("lq").trajectory()
    p = get_case("lq").problem
    assert np.max(np.abs(dhdt_gap(p, tr))) <= 1e-8
    assert p.autonomous


@settings(max_examples=25)
@given(st.lists(st.integers(-3, 3), min_size=3, max_size=3),
       st.lists(st.integers(-3, 3), min_size=2, max_size=2))
def test_adjoint_zero_when_data_free_of_x(cl, cphi):
    L = P(f"({cl[0]})*u1^2 + ({cl[1]})*t*u1 + ({cl[2]})*u1^4")
    phi = P(f"({cphi[0]})*u1 + ({cphi[1]})*t")
    p = OCProblem(1, 1, 0, 1, L, (phi,))
    tr = traj("sin(t)", "cos(t)", "exp(t)", n=50)
    assert np.all(pmp_adjoint_rhs(p, tr) == 0.0)


# -- first variation ------------------------------------------------------------


def test_first_variation_zero():
    assert first_variation(FREE, traj("t", "1", "2"), Variation.zero(1, 1)) == 0.0


def test_first_variation_endpoint_check():
    with pytest.raises(ValueError):
        first_variation(FREE, traj("t", "1", "2"), Variation((T("t"),), (T("0"),), (T("0"),)))


coef = st.integers(-4, 4)


def _variation(c):
    h1 = T(f"t*(1 - t)*(({c[0]}) + ({c[1]})*t)")
    h2 = T(f"({c[2]}) + ({c[3]})*t + ({c[4]})*t^2 + ({c[5]})*t^3")
    h3 = T(f"({c[6]})*t^3 + ({c[7]})")
    return Variation((h1,), (h2,), (h3,))


@settings(max_examples=30)
@given(st.lists(coef, min_size=8, max_size=8))
def test_first_variation_vanishes_on_extremal(c):
    assert abs(first_variation(FREE, traj("t", "1", "2"), _variation(c))) <= 1e-8


@settings(max_examples=30)
@given(st.lists(coef, min_size=8, max_size=8), st.lists(coef, min_size=8, max_size=8))
def test_first_variation_linear(c1, c2):
    tr = traj("t^2", "3*t", "1 + t")
    v1, v2 = _variation(c1), _variation(c2)
    lhs = first_variation(FREE, tr, v1 + v2)
    rhs = first_variation(FREE, tr, v1) + first_variation(FREE, tr, v2)
    assert abs(lhs - rhs) <= 1e-9


def test_first_variation_feasible_kills_h3():
    tr = traj("t^2", "2*t", "0")
    only_h3 = Variation((T("0"),), (T("0"),), (T("t*(1 - t)"),))
    assert first_variation(FREE, tr, only_h3) == pytest.approx(0.0, abs=1e-14)
    # remaining h2 term: integral of dH/du * 1 = integral of -4t = -2
    with_h2 = Variation((T("0"),), (T("1"),), (T("t*(1 - t)"),))
    assert first_variation(FREE, tr, with_h2) == pytest.approx(-2.0, abs=1e-13)
