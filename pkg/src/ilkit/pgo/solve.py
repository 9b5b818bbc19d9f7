"""Gauss-Newton / Levenberg-Marquardt back-end over the free (non-anchor) poses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient
from . import se2
from .graph import PoseGraph2D


@dataclass
class GNConfig:
    kind: str = "lm"  # "gn" or "lm"
    max_iters: int = 100
    tol: float = 1e-9  # on ||dL/dmu|| over free poses
    damping: float = 1e-4  # initial LM lambda
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_damping: float = 1e12

    def __post_init__(self) -> None:
        if self.kind not in ("gn", "lm"):
            raise ValueError(f"kind must be 'gn' or 'lm', got {self.kind!r}")
        if self.max_iters < 1 or not self.tol > 0 or self.damping < 0:
            raise ValueError("max_iters >= 1, tol > 0 and damping >= 0 required")


@dataclass
class GNResult:
    poses: np.ndarray
    cost: float
    grad_norm: float
    iterations: int
    converged: bool
    flagged: bool = False  # singular normal equations were damped
    costs: list = field(default_factory=list)


def _blocks(graph: PoseGraph2D, P: Tensor, Z, record: bool) -> tuple[Tensor, Tensor, Tensor]:
    """Residuals (E, 3) and per-edge Jacobian blocks dr/dP_i, dr/dP_j, each (E, 3, 3).

    r_e depends only on rows i_e and j_e, so one backward pass per residual
    component returns the whole column of blocks at once.
    """
    Pi, Pj = P[graph.i], P[graph.j]
    r = se2.relative_residual(Pi, Pj, Z)
    Ji, Jj = [], []
    for c in range(3):
        gi, gj = gradient(ad.tsum(r[:, c]), [Pi, Pj], record=record)
        Ji.append(gi)
        Jj.append(gj)
    return r, ad.stack(Ji, axis=1), ad.stack(Jj, axis=1)


def _dense_jacobian(graph: PoseGraph2D, Ji: Tensor, Jj: Tensor) -> Tensor:
    """(3E, 3N) Jacobian assembled by scattering the edge blocks."""
    E, N = graph.n_edges, graph.n_nodes
    e = np.arange(E)[:, None, None]
    c = np.arange(3)[None, :, None]
    d = np.arange(3)[None, None, :]
    J = ad.scatter_add(Ji, (e, c, graph.i[:, None, None], d), (E, 3, N, 3))
    J = J + ad.scatter_add(Jj, (e, c, graph.j[:, None, None], d), (E, 3, N, 3))
    return ad.reshape(J, (3 * E, 3 * N))


def normal_equations(graph: PoseGraph2D, P: Tensor, Z=None, record: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """(H, g, r) over the free poses: H = J'WJ, g = J'Wr (the cost gradient)."""
    Zm = graph.Z if Z is None else Z
    r, Ji, Jj = _blocks(graph, P, Zm, record)
    J = _dense_jacobian(graph, Ji, Jj)[:, 3:]
    w = ad.constant(graph.W.reshape(-1, 1))
    WJ = J * w
    H = ad.matmul(ad.transpose(J), WJ)
    g = ad.matmul(ad.transpose(WJ), ad.reshape(r, (-1, 1)))
    return H, ad.reshape(g, (-1,)), r


def cost_of(graph: PoseGraph2D, poses: np.ndarray) -> float:
    r = se2.relative_residual(poses[graph.i], poses[graph.j], graph.Z).numpy()
    return float(0.5 * np.sum(graph.W * r * r))


def gn_step(graph: PoseGraph2D, poses: np.ndarray, damping: float = 0.0) -> tuple[np.ndarray, float]:
    """Free-pose step solving (H + damping diag(H)) delta = -g, and ||g||.

    LM scales by diag(H) plus one, so a damping of lambda shrinks every
    component by at least 1 / (1 + lambda).
    """
    tape = Tape()
    P = tape.variable(poses)
    H, g, _ = normal_equations(graph, P)
    Hn, gn = H.numpy(), g.numpy()
    A = Hn + damping * (np.diag(np.diag(Hn)) + np.eye(len(gn)))
    delta = np.linalg.solve(A, -gn)
    return delta.reshape(-1, 3), float(np.linalg.norm(gn))


def _apply(poses: np.ndarray, delta: np.ndarray) -> np.ndarray:
    out = poses.copy()
    out[1:] += delta
    out[1:, 2] = se2.wrap(out[1:, 2]).numpy()
    return out


def gauss_newton_solve(graph: PoseGraph2D, config: Optional[GNConfig] = None) -> GNResult:
    """Minimise the graph cost over poses 1..N-1, node 0 fixed."""
    cfg = GNConfig() if config is None else config
    poses = graph.poses.copy()
    cost = cost_of(graph, poses)
    lam = cfg.damping if cfg.kind == "lm" else 0.0
    flagged = False
    costs = [cost]
    gnorm = np.inf
    it = 0
    while it < cfg.max_iters:
        try:
            delta, gnorm = gn_step(graph, poses, lam)
        except np.linalg.LinAlgError:
            lam = max(lam * cfg.damping_up, 1e-9)
            flagged = True
            if lam > cfg.max_damping:
                break
            continue
        if gnorm <= cfg.tol:
            break
        it += 1
        trial = _apply(poses, delta)
        tcost = cost_of(graph, trial)
        # near the optimum the cost change drops below rounding; a tie is accepted
        if cfg.kind == "gn" or tcost <= cost * (1.0 + 1e-12):
            poses, cost = trial, tcost
            costs.append(cost)
            lam *= cfg.damping_down
        else:
            lam *= cfg.damping_up
            if lam > cfg.max_damping:
                break
    if it == cfg.max_iters or gnorm > cfg.tol:
        tape = Tape()
        _, g, _ = normal_equations(graph, tape.variable(poses))
        gnorm = float(np.linalg.norm(g.numpy()))
    return GNResult(poses, cost, gnorm, it, gnorm <= cfg.tol, flagged, costs)


def unrolled_poses(graph: PoseGraph2D, P0: Tensor, Z: Tensor, steps: int) -> Tensor:
    """``steps`` undamped Gauss-Newton iterations kept on the tape of ``Z``.

    ``P0`` must be a tape variable so the Jacobian blocks are tracked.
    """
    P = P0
    N = graph.n_nodes
    for _ in range(steps):
        H, g, _ = normal_equations(graph, P, Z, record=True)
        delta = ad.reshape(ad.solve(H, -1.0 * g), (N - 1, 3))
        P = P + ad.concat([ad.constant(np.zeros((1, 3))), delta], axis=0)
    return P
