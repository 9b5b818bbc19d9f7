"""Synthetic odometry front-end, one-step hypergradient and imperative SLAM training."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient
from . import se2
from .graph import PoseGraph2D, Trajectory, dead_reckon, graph_cost, looping_trajectory
from .solve import GNConfig, GNResult, gauss_newton_solve, unrolled_poses

EPS_STAT = 1e-9


class NotStationary(RuntimeError):
    def __init__(self, grad_norm: float, tol: float) -> None:
        super().__init__(f"lower level not stationary: ||dL/dmu|| = {grad_norm:.3e} > {tol:.1e}")
        self.grad_norm = grad_norm


@dataclass
class SyntheticFrontEnd:
    """Odometry correction f(theta, x) = (s x_x + b_x, s x_y + b_y, x_theta + b_theta).

    theta = (b_x, b_y, b_theta, s); the identity front-end is (0, 0, 0, 1).
    """

    theta: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        self.theta = np.array(self.theta, dtype=np.float64).reshape(4)
        if not self.theta[3] > 0:
            raise ValueError(f"scale must be positive, got {self.theta[3]}")

    @staticmethod
    def apply(theta, raw) -> Tensor:
        th = ad.as_tensor(theta)
        x = ad.as_tensor(raw)
        s = th[3]
        return ad.stack([s * x[:, 0] + th[0], s * x[:, 1] + th[1], x[:, 2] + th[2]], axis=-1)

    def predict(self, raw: np.ndarray) -> np.ndarray:
        return self.apply(self.theta, raw).numpy()


def biased_sensor(traj: Trajectory, bias=(0.0, 0.0, 0.0), scale: float = 1.0) -> Trajectory:
    """Corrupt the raw odometry: x' = (scale x_t + bias_t, x_theta + bias_theta)."""
    raw = traj.odo_raw.copy()
    raw[:, :2] = scale * raw[:, :2] + np.asarray(bias[:2])
    raw[:, 2] += bias[2]
    return Trajectory(traj.truth, raw, traj.lc_i, traj.lc_j, traj.lc_Z, traj.odo_weight, traj.lc_weight)


def recoverable_bias_fixture(seed_rng: np.random.Generator, n_nodes: int = 60, laps: float = 3.0) -> Trajectory:
    """Looping trajectory whose odometry has a translation/heading bias and a scale error."""
    return biased_sensor(looping_trajectory(seed_rng, n_nodes, laps), bias=(0.04, -0.03, 0.01), scale=1.1)


def hypergrad_fixture(rng: np.random.Generator, n_nodes: int = 30, laps: float = 2.0) -> tuple[Trajectory, np.ndarray]:
    """Random biased trajectory and a random front-end, for comparing hypergradient routes."""
    base = looping_trajectory(rng, n_nodes, laps)
    traj = biased_sensor(base, rng.uniform(-0.05, 0.05, 3), rng.uniform(0.9, 1.1))
    theta = np.concatenate([rng.uniform(-0.02, 0.02, 3), [rng.uniform(0.95, 1.05)]])
    return traj, theta


def frontend_graph(traj: Trajectory, theta: np.ndarray) -> PoseGraph2D:
    """Graph with front-end odometry edges, initialised by dead reckoning from the true start."""
    odo = SyntheticFrontEnd.apply(theta, traj.odo_raw).numpy()
    return traj.graph(odo, dead_reckon(traj.truth[0], odo))


def _measurements(traj: Trajectory, theta_t: Tensor) -> Tensor:
    return ad.concat([SyntheticFrontEnd.apply(theta_t, traj.odo_raw), ad.constant(traj.lc_Z.reshape(-1, 3))], axis=0)


def one_step_hypergrad(traj: Trajectory, theta: np.ndarray, solution: GNResult, eps_stat: float = EPS_STAT) -> np.ndarray:
    """dU/dtheta with U = L at mu*, mu* held constant.

    Valid because dL/dmu vanishes at a stationary mu*; a solution with
    ||dL/dmu|| above ``eps_stat`` is refused.
    """
    if not solution.grad_norm <= eps_stat:
        raise NotStationary(solution.grad_norm, eps_stat)
    graph = traj.graph(np.zeros((traj.n_nodes - 1, 3)), solution.poses)
    tape = Tape()
    th = tape.variable(theta)
    U = graph_cost(graph, ad.constant(solution.poses), _measurements(traj, th))
    return gradient(U, [th])[0].numpy()


def unrolled_hypergrad(traj: Trajectory, theta: np.ndarray, steps: int = 20, init: Optional[np.ndarray] = None) -> np.ndarray:
    """d L(mu_T(theta), theta) / d theta through ``steps`` recorded Gauss-Newton iterations."""
    graph = frontend_graph(traj, theta)
    P0 = graph.poses if init is None else init
    tape = Tape()
    th = tape.variable(theta)
    Z = _measurements(traj, th)
    P = unrolled_poses(graph, tape.variable(P0), Z, steps)
    return gradient(graph_cost(graph, P, Z), [th])[0].numpy()


def ate(estimated: np.ndarray, ground_truth: np.ndarray) -> float:
    """Positional RMSE with both trajectories expressed relative to their node 0."""
    est, gt = np.asarray(estimated, dtype=np.float64), np.asarray(ground_truth, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"trajectory lengths differ: {est.shape} vs {gt.shape}")
    a = se2.between(est[:1], est).numpy()
    b = se2.between(gt[:1], gt).numpy()
    d = a[:, :2] - b[:, :2]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


@dataclass
class SlamHistoryRow:
    iter: int
    ate_frontend: float
    ate_optimized: float
    cost: float
    grad_norm: float


@dataclass
class SlamResult:
    theta: np.ndarray
    history: list


def imperative_slam_train(
    traj: Trajectory,
    iters: int = 50,
    lr: float = 4e-3,
    theta0: Optional[np.ndarray] = None,
    gn: Optional[GNConfig] = None,
    log: Optional[Callable[[str], None]] = None,
) -> SlamResult:
    """Front-end prediction, back-end optimisation, one-step hypergradient, gradient step.

    Plain gradient descent: lr must stay below 2 / (largest curvature of L*
    in theta), about 8e-3 on the default fixture. Adam's sign-like first
    steps move the heading bias enough to wreck dead reckoning.

    Each row reports the front-end (dead-reckoned) and optimised ATE for the
    parameters used in that iteration, before the update.
    """
    theta = SyntheticFrontEnd().theta if theta0 is None else np.array(theta0, dtype=np.float64)
    hist = []
    for it in range(iters):
        graph = frontend_graph(traj, theta)
        sol = gauss_newton_solve(graph, gn)
        g = one_step_hypergrad(traj, theta, sol)
        row = SlamHistoryRow(it, ate(graph.poses, traj.truth), ate(sol.poses, traj.truth), sol.cost, sol.grad_norm)
        hist.append(row)
        if log:
            log(f"iter {it}: ATE front-end {row.ate_frontend:.4f}, optimised {row.ate_optimized:.4f}, L* {row.cost:.4g}")
        theta = theta - lr * g
        if not theta[3] > 0:
            raise ValueError("front-end scale left the positive range")
    return SlamResult(theta, hist)


def write_slam_csv(path: Union[str, Path], history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "ate_frontend", "ate_optimized"])
        for r in history:
            w.writerow([r.iter, repr(r.ate_frontend), repr(r.ate_optimized)])
