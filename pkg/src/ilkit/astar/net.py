"""Heuristic network: two neighbourhood-aggregate layers and a per-cell perceptron."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .. import ad
from ..ad import ParameterStore, Tensor
from .grid import GridPlanInstance

N_FEATURES = 6


def features(inst: GridPlanInstance) -> np.ndarray:
    """(H, W, 6): the three-channel encoding plus goal-relative dr, dc and distance.

    The extra channels are functions of the goal channel, scaled by the grid size.
    """
    H, W = inst.shape
    r, c = np.mgrid[0:H, 0:W]
    scale = float(max(H, W))
    dr = (r - inst.goal[0]) / scale
    dc = (c - inst.goal[1]) / scale
    return np.concatenate([inst.encode(), np.stack([dr, dc, np.hypot(dr, dc)], axis=-1)], axis=-1)


def init_heuristic_net(rng: Optional[np.random.Generator], width: int = 16) -> ParameterStore:
    """``rng=None`` gives the all-zero net, whose field is ln 2 everywhere."""
    store = ParameterStore()
    sizes = [(N_FEATURES, width), (width, width)]
    for i, (a, b) in enumerate(sizes):
        for kind in ("self", "nbr"):
            W = np.zeros((a, b)) if rng is None else ad.glorot(rng, a, b) * (0.5 if kind == "nbr" else 1.0)
            store.add(f"conv{i}.{kind}", W)
        store.add(f"conv{i}.b", np.zeros(b))
    ad.init_mlp(store, "head", [width + N_FEATURES, width, 1], rng, zero_last=True)
    return store


def heuristic_net_forward(params: Mapping[str, Tensor], inst: GridPlanInstance) -> Tensor:
    """Nonnegative field (H, W) = softplus(net(features))."""
    H, W = inst.shape
    x0 = ad.constant(features(inst))
    x = x0
    for i in range(2):
        Ws, Wn, b = params[f"conv{i}.self"], params[f"conv{i}.nbr"], params[f"conv{i}.b"]
        c_in = x.shape[-1]
        flat = ad.reshape(x, (H * W, c_in))
        agg = ad.reshape(ad.neighborhood_aggregate(x), (H * W, c_in))
        y = ad.matmul(flat, Ws) + ad.matmul(agg, Wn) + b
        x = ad.reshape(ad.tanh(y), (H, W, y.shape[-1]))
    z = ad.concat([ad.reshape(x, (H * W, x.shape[-1])), ad.reshape(x0, (H * W, N_FEATURES))], axis=1)
    out = ad.mlp(params, "head", z, 2, act="tanh")
    return ad.reshape(ad.softplus(out), (H, W))


def heuristic_field(params: Mapping[str, np.ndarray], inst: GridPlanInstance) -> np.ndarray:
    """Untracked forward pass on plain arrays."""
    return heuristic_net_forward({k: ad.constant(v) for k, v in params.items()}, inst).numpy()


LN2 = float(np.log(2.0))


def compose_heuristic(euclid, field):
    """h = euclid (1 + field) / (1 + ln 2): the zero net reproduces Euclidean A*.

    Works on arrays and tensors alike; h >= 0 because field >= 0.
    """
    return euclid * (1.0 + field) * (1.0 / (1.0 + LN2))


def planner_heuristic(inst: GridPlanInstance, field: np.ndarray) -> np.ndarray:
    """h used for search, built from Euclidean distance and the learned field."""
    return compose_heuristic(inst.euclidean(), field)
