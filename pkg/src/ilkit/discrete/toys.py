"""Small categorical problems whose expectations can be enumerated exactly."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import softmax

from .estimators import CategoricalDistribution, GradientSampleBatch


@dataclass
class CategoricalToy:
    """Independent rows z_r ~ softmax(theta[r]) with a cost over joint outcomes.

    theta has shape (rows, classes); gradients are returned with that shape.
    The surrogate is linear in the one-hot outcome, s(P) = <W, P>, so
    L'(z) = W[r, z_r] summed over rows.
    """

    theta: np.ndarray
    cost: Callable[[np.ndarray], float]
    W: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        if self.W is None:
            self.W = np.zeros_like(self.theta)

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.theta, axis=1)

    def outcomes(self) -> list[np.ndarray]:
        rows, k = self.theta.shape
        if k**rows > 64:
            raise ValueError(f"{k**rows} outcomes is too many to enumerate")
        return [np.array(z) for z in itertools.product(range(k), repeat=rows)]

    def prob(self, z: np.ndarray) -> float:
        return float(np.prod(self.probs[np.arange(len(z)), z]))

    def score(self, z: np.ndarray) -> np.ndarray:
        """grad_theta log f(z|theta) = onehot(z) - P, row by row."""
        return np.eye(self.theta.shape[1])[z] - self.probs

    def surrogate(self, z: np.ndarray) -> float:
        return float(self.W[np.arange(len(z)), z].sum())

    def pathwise(self) -> np.ndarray:
        """grad_theta <W, P> through the row softmax."""
        P = self.probs
        return P * (self.W - np.sum(P * self.W, axis=1, keepdims=True))

    def expected_cost(self) -> float:
        return sum(self.prob(z) * self.cost(z) for z in self.outcomes())

    def exact_grad(self) -> np.ndarray:
        return sum(self.prob(z) * self.cost(z) * self.score(z) for z in self.outcomes())

    def batch(self, zs: np.ndarray) -> GradientSampleBatch:
        return GradientSampleBatch(
            costs=np.array([self.cost(z) for z in zs]),
            score_grads=np.array([self.score(z) for z in zs]),
            surrogate_values=np.array([self.surrogate(z) for z in zs]),
            pathwise_grad=self.pathwise(),
        )

    def enumeration_batch(self) -> tuple[GradientSampleBatch, np.ndarray]:
        zs = self.outcomes()
        return self.batch(np.array(zs)), np.array([self.prob(z) for z in zs])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return CategoricalDistribution(self.theta).sample(rng, n)

    def fit_surrogate(self, rng: np.random.Generator, n: int = 4000) -> float:
        """Least-squares fit of W to the cost on samples (minimum-norm solution); returns corr(L, L')."""
        zs = self.sample(rng, n)
        X = np.stack([np.eye(self.theta.shape[1])[z].reshape(-1) for z in zs])
        y = np.array([self.cost(z) for z in zs])
        w, *_ = np.linalg.lstsq(X, y, rcond=None)
        self.W = w.reshape(self.W.shape)
        return self.correlation(zs)

    def correlation(self, zs: np.ndarray) -> float:
        L = np.array([self.cost(z) for z in zs])
        Lp = np.array([self.surrogate(z) for z in zs])
        return float(np.corrcoef(L, Lp)[0, 1])


def expectation(per_sample: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Probability-weighted sum over enumerated outcomes."""
    return np.tensordot(probs, per_sample, axes=(0, 0))


def load_cost(rng: np.random.Generator, rows: int, classes: int, coupling: float = 0.3) -> Callable[[np.ndarray], float]:
    """Per-choice cost plus a max-load coupling term, loosely MTSP-shaped."""
    base = rng.uniform(0.0, 2.0, (rows, classes))
    sizes = rng.uniform(0.5, 1.5, rows)

    def cost(z: np.ndarray) -> float:
        loads = np.bincount(z, weights=sizes, minlength=classes)
        return float(base[np.arange(rows), z].sum() + coupling * loads.max())

    return cost
