"""Gradient estimators for discrete lower levels and variance tracking."""

from .estimators import (
    CategoricalDistribution,
    GradientSampleBatch,
    control_variate_grad,
    control_variate_loss,
    optimal_gamma,
    reparam_grad,
    score_function_grad,
    score_surrogate_loss,
    variance_reduction_factor,
)
from .toys import CategoricalToy, expectation, load_cost
from .variance import LOG_FLOOR, VarianceReport, VarianceTracker, track_variance, write_variance_csv

__all__ = [name for name in dir() if not name.startswith("_")]
