"""Expression trees, parsing, simplification and calculus."""

from .calculus import compile_expr, differentiate, evaluate, replace, substitute
from .expr import (
    FUNCTIONS,
    ONE,
    ZERO,
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
    VarAlphabet,
    as_expr,
    canonical_names,
    cos,
    exp,
    free_vars,
    log,
    node_count,
    sin,
    sqrt,
    to_string,
    var_rank,
)
from .normal import (
    ZeroStatus,
    build,
    has_float,
    is_polynomial,
    is_zero,
    normalize,
    polynomial_terms,
    simplify,
)
from .parser import parse

__all__ = [
    "FUNCTIONS", "ONE", "ZERO", "Add", "Const", "Div", "Expr", "Func", "Mul", "Neg", "Pow",
    "Sub", "Var", "VarAlphabet", "ZeroStatus", "as_expr", "build", "canonical_names",
    "compile_expr", "cos", "differentiate", "evaluate", "exp", "free_vars", "has_float",
    "is_polynomial", "is_zero", "log", "node_count", "normalize", "parse",
    "polynomial_terms", "replace", "simplify", "sin", "sqrt", "substitute", "to_string",
    "var_rank",
]
