"""Bilevel optimization: lower-level solvers and hypergradients."""

from .hypergrad import (
    Hypergrad,
    HypergradMethod,
    constrained_jacobian,
    dphi_dpsi,
    hypergrad,
    hypergrad_constrained,
    hypergrad_first_order,
    hypergrad_implicit,
    hypergrad_unrolled,
)
from .linsolve import SolveResult, conjugate_gradient, gradient_descent_solve, linear_solve
from .lower import BilevelProblem, LLSolverConfig, LowerSolution, LowerSolveError, lower_grad_norm, solve_lower
from .train import TrainAborted, TrainResult, imperative_train

__all__ = [name for name in dir() if not name.startswith("_")]
