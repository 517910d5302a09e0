"""Built-in problems with closed-form extremals and known symmetries."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .numeric.quadrature import graded_grid
from .problem import Boundary, ClosedForm, OCProblem, Trajectory
from .symbolic import parse, simplify
from .symmetry import state_translation, time_translation

BALL_MIZEL_EPSILON = Fraction(1, 1000)
SINGULAR_SHRINK = 1e-6
GRID_INTERVALS = 2000


@dataclass
class CaseEntry:
    """A named problem with optional closed-form trajectory and generators.

    ``expected`` holds the verdicts the commands must reproduce:
    ``invariance`` (generator label -> verdict), ``diagnosis``,
    ``degree0_basis`` (size of the degree-0 generator basis) and
    ``shooting`` ("ok" or "fails").
    """

    name: str
    problem: OCProblem
    closed_form: ClosedForm | None = None
    singular: tuple = ()
    generators: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    description: str = ""
    params: dict = field(default_factory=dict)

    def trajectory(self, intervals: int = GRID_INTERVALS) -> Trajectory | None:
        """Closed-form trajectory sampled on a grid inside the horizon.

        Singular endpoints are excluded by 1e-6 of the horizon length and
        the grid is graded towards them.
        """
        if self.closed_form is None:
            return None
        p = self.problem
        a, b = p.a, p.b
        shrink = SINGULAR_SHRINK * (b - a)
        lo = a + shrink if "a" in self.singular else a
        hi = b - shrink if "b" in self.singular else b
        if self.singular:
            grid = graded_grid(lo, hi, intervals, 3.0, self.singular)
        else:
            grid = np.linspace(lo, hi, intervals + 1)
        meta = {"source": f"closed form ({self.name})"}
        if self.singular:
            meta["excluded_radius"] = shrink
            meta["control_class"] = "L1"
        return Trajectory.from_closed_form(self.closed_form, grid, (a, b), self.singular, meta)


def _p(text, n=1, m=1):
    from .symbolic import VarAlphabet

    alpha = VarAlphabet.canonical(n, m)
    return parse(text, alpha)


def _t(text):
    return parse(text, ["t"])


def _free_particle(name="freeparticle", cyclic=False) -> CaseEntry:
    p = OCProblem(1, 1, 0, 1, _p("u1^2"), (_p("u1"),), (Boundary(0.0, 1.0),), name)
    cf = ClosedForm((_t("t"),), (_t("1"),), (_t("2"),))
    gens = {"state translation": state_translation(1, 1)}
    if not cyclic:
        gens = {"time translation": time_translation(1, 1), **gens}
    return CaseEntry(
        name, p, cf, (), gens,
        {
            "invariance": {k: "invariant" for k in gens},
            "diagnosis": "PMP-consistent",
            "degree0_basis": 2,
            "shooting": "ok",
        },
        "free particle: L = u^2, xdot = u, x(0) = 0, x(1) = 1"
        + ("; x1 is cyclic, momentum psi1 is conserved" if cyclic else ""),
    )


def _sinh_over_sinh1(arg: str):
    # sinh(t)/sinh(1) written with exp since the grammar has no sinh
    return _t(f"({arg})/(exp(1) - exp(-1))")


def _lq() -> CaseEntry:
    p = OCProblem(1, 1, 0, 1, _p("u1^2 + x1^2"), (_p("u1"),), (Boundary(0.0, 1.0),), "lq")
    x = _sinh_over_sinh1("exp(t) - exp(-t)")
    u = _sinh_over_sinh1("exp(t) + exp(-t)")
    psi = simplify(2 * u)
    cf = ClosedForm((x,), (u,), (psi,))
    gens = {"time translation": time_translation(1, 1)}
    return CaseEntry(
        "lq", p, cf, (), gens,
        {
            "invariance": {"time translation": "invariant", "state translation": "not-invariant"},
            "diagnosis": "PMP-consistent",
            "degree0_basis": 1,
            "shooting": "ok",
        },
        "linear-quadratic: L = u^2 + x^2, xdot = u, x = sinh(t)/sinh(1)",
    )


def ball_mizel_problem(k=2, eps=BALL_MIZEL_EPSILON, name=None) -> OCProblem:
    eps = Fraction(eps) if not isinstance(eps, float) else eps
    L = _p("(x1^3 - t^2)^2*u1^14") + _const(eps) * _p("u1^2")
    return OCProblem(1, 1, 0, 1, simplify(L), (_p("u1"),), (Boundary(0.0, float(k)),),
                     name or f"ballmizel-k{k}")


def _const(v):
    from .symbolic.normal import const_expr

    return const_expr(v)


def ball_mizel_closed_form(p: OCProblem, k) -> ClosedForm:
    """x = k t^(2/3), u = (2k/3) t^(-1/3), psi = dL/du along the pair."""
    from .symbolic import differentiate, substitute

    kk = _const(Fraction(k))
    x = simplify(kk * _t("t^(2/3)"))
    u = simplify(kk * _t("2/3*t^(-1/3)"))
    psi = substitute(differentiate(p.L, "u1"), {"x1": x, "u1": u})
    return ClosedForm((x,), (u,), (psi,))


def _ball_mizel(k) -> CaseEntry:
    p = ball_mizel_problem(k)
    cf = ball_mizel_closed_form(p, k)
    gens = {"time translation": time_translation(1, 1)}
    return CaseEntry(
        f"ballmizel-k{k}", p, cf, ("a",), gens,
        {
            "invariance": {"time translation": "not-invariant", "state translation": "not-invariant"},
            "diagnosis": "PMP-fails-adjoint" if k != 1 else "PMP-consistent",
            "degree0_basis": 0,
        },
        f"Ball-Mizel: L = (x^3 - t^2)^2 u^14 + eps u^2, eps = 1/1000, k = {k}; "
        "psi is the maximality multiplier dL/du",
        {"k": k, "eps": BALL_MIZEL_EPSILON},
    )


def _noninv() -> CaseEntry:
    p = OCProblem(1, 1, 0, 1, _p("u1^2"), (_p("u1 + x1"),), (Boundary(0.0, 1.0),), "noninv")
    x = _sinh_over_sinh1("exp(t) - exp(-t)")
    u = _t("2*exp(-t)/(exp(1) - exp(-1))")
    psi = simplify(2 * u)
    cf = ClosedForm((x,), (u,), (psi,))
    gens = {"time translation": time_translation(1, 1), "state translation": state_translation(1, 1)}
    return CaseEntry(
        "noninv", p, cf, (), gens,
        {
            "invariance": {"time translation": "invariant", "state translation": "not-invariant"},
            "diagnosis": "PMP-consistent",
            "degree0_basis": 1,
            "shooting": "ok",
        },
        "negative control: L = u^2, xdot = u + x; x1 is not cyclic",
    )


def builtin_cases() -> list:
    """All built-in cases in a fixed order."""
    return [
        _free_particle(),
        _free_particle("cyclic", cyclic=True),
        _lq(),
        _ball_mizel(1),
        _ball_mizel(2),
        _noninv(),
    ]


def get_case(name: str) -> CaseEntry:
    for c in builtin_cases():
        if c.name == name:
            return c
    names = ", ".join(c.name for c in builtin_cases())
    raise KeyError(f"unknown case {name!r}; available: {names}")


def case_generators(name: str) -> dict:
    return get_case(name).generators

