"""Outer loop alternating lower-level solves and hypergradient steps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import ad
from ..ad import Adam, SGD
from .hypergrad import HypergradMethod, hypergrad
from .lower import BilevelProblem, _flat, solve_lower, unroll


class TrainAborted(RuntimeError):
    def __init__(self, msg: str, history: list) -> None:
        super().__init__(msg)
        self.history = history


@dataclass
class TrainResult:
    psi: np.ndarray
    history: list = field(default_factory=list)
    psi_trajectory: list = field(default_factory=list)


def imperative_train(
    problem: BilevelProblem,
    psi0: Any,
    outer_optimizer: SGD | Adam,
    iters: int,
    method: HypergradMethod | None = None,
) -> TrainResult:
    """Alternate argmin_phi L and a step on psi along the hypergradient of U.

    ``history[k]`` is U at the k-th iterate, evaluated at its lower-level
    solution before the update.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    method = method or HypergradMethod()
    psi = _flat(psi0).copy()
    history: list = []
    traj = [psi.copy()]
    for k in range(iters):
        if method.kind == "unrolled":
            phi_t, *_ = unroll(problem, ad.constant(psi), ad.Tape(), record=False)
            phi = phi_t.numpy().reshape(-1)
        else:
            phi = solve_lower(problem, psi).phi
        U = problem.upper(ad.constant(psi), ad.constant(phi)).item()
        history.append(U)
        if not np.isfinite(U):
            raise TrainAborted(f"non-finite upper cost at iteration {k}", history)
        g = hypergrad(problem, psi, method, phi=None if method.kind == "unrolled" else phi).grad
        psi = outer_optimizer.step({"psi": psi}, {"psi": g})["psi"]
        traj.append(psi.copy())
    return TrainResult(psi, history, traj)
