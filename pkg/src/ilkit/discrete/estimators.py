"""Gradient estimators through sampled discrete decisions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient


class CategoricalDistribution:
    """Row-wise categorical over the last axis of ``logits``."""

    def __init__(self, logits: Tensor) -> None:
        self.logits = logits if isinstance(logits, Tensor) else ad.constant(logits)
        if self.logits.ndim not in (1, 2):
            raise ad.ShapeError(f"categorical logits must be 1-D or 2-D, got shape {self.logits.shape}")
        self.probs = ad.softmax(self.logits, axis=-1)
        self.log_probs = ad.log_softmax(self.logits, axis=-1)

    @property
    def rows(self) -> int:
        return 1 if self.logits.ndim == 1 else self.logits.shape[0]

    @property
    def classes(self) -> int:
        return self.logits.shape[-1]

    def _p2d(self) -> np.ndarray:
        return self.probs.data.reshape(self.rows, self.classes)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` joint draws, shape (n, rows), by inverse CDF per row."""
        cdf = np.cumsum(self._p2d(), axis=1)
        cdf[:, -1] = 1.0
        u = rng.random((n, self.rows))
        out = np.empty((n, self.rows), dtype=np.int64)
        for r in range(self.rows):
            out[:, r] = np.searchsorted(cdf[r], u[:, r], side="right")
        return np.minimum(out, self.classes - 1)

    def mode(self) -> np.ndarray:
        return np.argmax(self._p2d(), axis=1)

    def onehot(self, z: np.ndarray) -> np.ndarray:
        """(n, rows) indices to (n, rows, classes) indicators."""
        z = np.asarray(z).reshape(-1, self.rows)
        return np.eye(self.classes)[z]

    def log_prob(self, z: np.ndarray) -> Tensor:
        """Joint log-probability of each draw, shape (n,)."""
        oh = self.onehot(z)
        lp = ad.reshape(self.log_probs, (self.rows * self.classes,))
        return ad.matmul(ad.constant(oh.reshape(len(oh), -1)), lp)


@dataclass
class GradientSampleBatch:
    """Per-sample quantities for S draws z_i ~ f(z|theta).

    ``score_grads[i]`` is grad_theta log f(z_i|theta).  ``surrogate_values[i]``
    is L'(z_i) and ``pathwise_grad`` is grad_theta s(f(theta)), either one
    vector or one per sample.
    """

    costs: np.ndarray
    score_grads: np.ndarray
    surrogate_values: Optional[np.ndarray] = None
    pathwise_grad: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.costs = np.asarray(self.costs, dtype=np.float64).reshape(-1)
        self.score_grads = np.asarray(self.score_grads, dtype=np.float64)
        S = self.costs.size
        if S < 1:
            raise ValueError("empty sample batch")
        if self.score_grads.shape[0] != S:
            raise ValueError(f"{S} costs but {self.score_grads.shape[0]} score gradients")
        if self.surrogate_values is not None:
            self.surrogate_values = np.asarray(self.surrogate_values, dtype=np.float64).reshape(-1)
            if self.surrogate_values.size != S:
                raise ValueError(f"{S} costs but {self.surrogate_values.size} surrogate values")
        if self.pathwise_grad is not None:
            self.pathwise_grad = np.asarray(self.pathwise_grad, dtype=np.float64)

    @property
    def size(self) -> int:
        return self.costs.size

    def _bcast(self, w: np.ndarray) -> np.ndarray:
        return w.reshape((-1,) + (1,) * (self.score_grads.ndim - 1))

    def per_sample_score(self) -> np.ndarray:
        return self._bcast(self.costs) * self.score_grads

    def per_sample_control_variate(self) -> np.ndarray:
        if self.surrogate_values is None or self.pathwise_grad is None:
            raise ValueError("control variate needs surrogate values and the pathwise surrogate gradient")
        resid = self._bcast(self.costs - self.surrogate_values) * self.score_grads
        pw = self.pathwise_grad
        return resid + (pw if pw.shape == resid.shape else pw[None])


def score_function_grad(batch: GradientSampleBatch) -> np.ndarray:
    """(1/S) sum_i L(z_i) grad log f(z_i|theta)."""
    return batch.per_sample_score().mean(axis=0)


def control_variate_grad(batch: GradientSampleBatch) -> np.ndarray:
    """(1/S) sum_i [L(z_i) - L'(z_i)] grad log f(z_i|theta) + grad s(f(theta)), gamma = -1.

    Unbiased whenever E_z[L'(z) grad log f] equals the pathwise term, e.g.
    when L'(z) = s(onehot(z)) with s linear in its relaxed input.
    """
    return batch.per_sample_control_variate().mean(axis=0)


def reparam_grad(
    transform: Callable[[Tensor, np.ndarray], Tensor],
    g: Callable[[Tensor], Tensor],
    theta: np.ndarray,
    eps: np.ndarray,
) -> np.ndarray:
    """(1/S) sum_i dg/dT dT/dtheta at z_i = T(theta, eps_i).

    ``transform`` is applied to the whole sample array at once and ``g``
    returns one value per sample.
    """
    tape = Tape()
    th = tape.variable(theta)
    vals = g(transform(th, np.asarray(eps, dtype=np.float64)))
    (gt,) = gradient(ad.mean(vals), [th])
    return gt.numpy()


def score_surrogate_loss(log_probs: Tensor, costs: np.ndarray) -> Tensor:
    """Scalar whose theta-gradient is the score-function estimate."""
    return ad.mean(log_probs * ad.constant(np.asarray(costs, dtype=np.float64)))


def control_variate_loss(log_probs: Tensor, costs: np.ndarray, surrogate_values: Tensor, relaxed_surrogate: Tensor) -> Tensor:
    """Scalar whose theta-gradient is the control-variate estimate.

    ``surrogate_values`` (L'(z_i)) must not depend on theta; they may depend
    on surrogate parameters, which keeps the estimate differentiable in them.
    """
    resid = ad.constant(np.asarray(costs, dtype=np.float64)) - surrogate_values
    return ad.mean(log_probs * resid) + relaxed_surrogate


def optimal_gamma(cov_xy: float, var_y: float) -> float:
    """gamma* = -Cov(X, Y) / Var(Y) minimises Var(X + gamma (Y - E Y))."""
    if not var_y > 0:
        raise ValueError(f"var_y must be positive, got {var_y}")
    return -float(cov_xy) / float(var_y)


def variance_reduction_factor(rho: float) -> float:
    """Var(X*) / Var(X) at the optimal gamma."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    return 1.0 - float(rho) ** 2
