"""Hypothesis strategies for expression trees over a small alphabet."""

from fractions import Fraction

from hypothesis import strategies as st

from ocnoether.symbolic import Const, Func, Var

NAMES = ["t", "x1", "u1", "psi1"]

consts = st.builds(Const, st.fractions(min_value=-5, max_value=5, max_denominator=7))
variables = st.sampled_from(NAMES).map(Var)


def _extend(children):
    return st.one_of(
        st.tuples(children, children).map(lambda p: p[0] + p[1]),
        st.tuples(children, children).map(lambda p: p[0] - p[1]),
        st.tuples(children, children).map(lambda p: p[0] * p[1]),
        children.map(lambda c: -c),
        st.tuples(children, st.integers(0, 3)).map(lambda p: p[0] ** p[1]),
        children.map(lambda c: Func("sin", c)),
        children.map(lambda c: Func("cos", c)),
        # smooth and defined everywhere
        children.map(lambda c: Func("exp", Func("sin", c))),
        children.map(lambda c: Func("log", 1 + c * c)),
        children.map(lambda c: Func("sqrt", 2 + Func("cos", c))),
        st.tuples(children, children).map(lambda p: p[0] / (2 + Func("sin", p[1]))),
    )


exprs = st.recursive(st.one_of(consts, variables), _extend, max_leaves=6)

points = st.fixed_dictionaries(
    {n: st.floats(min_value=-2, max_value=2, allow_nan=False) for n in NAMES}
)

rationals = st.fractions(min_value=-4, max_value=4, max_denominator=5).filter(lambda f: f != Fraction(0))
