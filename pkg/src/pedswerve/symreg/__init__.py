"""Symbolic regression over ``{+, *, sin, cos}`` plus a direct sinusoid fitter."""

from .constants import optimize_constants
from .expr import (
    Binary,
    Constant,
    Expr,
    Unary,
    Variable,
    X,
    eval_expr,
    format_expr,
    parse_expr,
)
from .operators import crossover, mutate, random_tree
from .search import (
    Individual,
    SymRegConfig,
    front_from_json,
    front_to_json,
    pareto_front,
    prune_insignificant_terms,
    run_search,
)
from .simplify import simplify
from .sinusoid import SinusoidParams, fit_sinusoid

__all__ = [
    "Binary", "Constant", "Expr", "Individual", "SinusoidParams", "SymRegConfig", "Unary", "Variable", "X",
    "crossover", "eval_expr", "fit_sinusoid", "format_expr", "front_from_json", "front_to_json", "mutate",
    "optimize_constants", "pareto_front", "parse_expr", "prune_insignificant_terms", "random_tree",
    "run_search", "simplify",
]
