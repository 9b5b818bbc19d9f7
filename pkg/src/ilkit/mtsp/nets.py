"""Allocation network and the surrogate (control-variate) network."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .. import ad
from ..ad import ParameterStore, Tensor
from .instance import MtspInstance

N_FEATURES = 7


def city_features(inst: MtspInstance) -> np.ndarray:
    """(N, 7): x, y, depot-relative dx, dy, distance, and the bearing as cos/sin."""
    d = inst.cities - inst.depot
    r = np.sqrt(np.sum(d * d, axis=1))
    ang = np.arctan2(d[:, 1], d[:, 0])
    return np.column_stack([inst.cities, d, r, np.cos(ang), np.sin(ang)])


def init_allocation_net(rng: Optional[np.random.Generator], agents: int, hidden: int = 64) -> ParameterStore:
    """Two 64-wide tanh layers to M logits; the output layer starts at zero, so rows start uniform.

    ``rng=None`` gives the all-zero net.
    """
    store = ParameterStore()
    ad.init_mlp(store, "alloc", [N_FEATURES, hidden, hidden, agents], rng, zero_last=True)
    return store


def allocation_logits(params: Mapping[str, Tensor], inst: MtspInstance) -> Tensor:
    return ad.mlp(params, "alloc", ad.constant(city_features(inst)), 3)


def allocation_probs(params: Mapping[str, np.ndarray], inst: MtspInstance) -> np.ndarray:
    """Untracked (N, M) probability matrix."""
    logits = allocation_logits({k: ad.constant(v) for k, v in params.items()}, inst)
    return ad.softmax(logits, axis=-1).numpy()


def init_surrogate_net(rng: Optional[np.random.Generator], agents: int, hidden: int = 256) -> ParameterStore:
    """Three-layer tanh perceptron; the zero output layer makes the surrogate start at 0."""
    store = ParameterStore()
    ad.init_mlp(store, "sur", [2 * N_FEATURES + agents, hidden, hidden, agents], rng, zero_last=True)
    return store


def surrogate_coefficients(params: Mapping[str, Tensor], inst: MtspInstance, probs: Tensor) -> Tensor:
    """(N, M) coefficients W with s(A) = sum(A * W).

    Each city row sees its features, its allocation probabilities and the
    instance summary (mean city features). The probabilities enter through a
    stop-gradient, so s is linear in the allocation it scores and
    E[s(onehot z)] = s(P) holds exactly.
    """
    f = city_features(inst)
    summary = np.broadcast_to(f.mean(axis=0), f.shape)
    x = ad.concat([ad.constant(f), ad.stop_gradient(probs), ad.constant(summary)], axis=1)
    return ad.mlp(params, "sur", x, 3)
