"""Pose graphs, the line-oriented graph file, and a synthetic looping trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .. import ad
from . import se2


class GraphFormatError(ValueError):
    pass


@dataclass
class PoseGraph2D:
    """Poses (N, 3); edges i -> j with measurement Z (E, 3) and diagonal information W (E, 3).

    Node 0 is the anchor and never moves.
    """

    poses: np.ndarray
    i: np.ndarray
    j: np.ndarray
    Z: np.ndarray
    W: np.ndarray

    def __post_init__(self) -> None:
        self.poses = np.array(self.poses, dtype=np.float64).reshape(-1, 3)
        self.i = np.asarray(self.i, dtype=np.int64).reshape(-1)
        self.j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        self.Z = np.array(self.Z, dtype=np.float64).reshape(-1, 3)
        self.W = np.array(self.W, dtype=np.float64).reshape(-1, 3)
        N, E = len(self.poses), len(self.i)
        if not (len(self.j) == E == len(self.Z) == len(self.W)):
            raise ValueError("edge arrays have different lengths")
        if E and (min(self.i.min(), self.j.min()) < 0 or max(self.i.max(), self.j.max()) >= N):
            raise ValueError("edge index out of range")
        if np.any(self.i == self.j):
            raise ValueError("self-loop edge")
        if np.any(self.W < 0):
            raise ValueError("information weights must be nonnegative")
        if not _connected(N, self.i, self.j):
            raise ValueError("pose graph is not connected")

    @property
    def n_nodes(self) -> int:
        return len(self.poses)

    @property
    def n_edges(self) -> int:
        return len(self.i)

    def with_poses(self, poses: np.ndarray) -> "PoseGraph2D":
        return replace(self, poses=np.array(poses, dtype=np.float64))

    def with_measurements(self, Z: np.ndarray) -> "PoseGraph2D":
        return replace(self, Z=np.array(Z, dtype=np.float64))


def _connected(N: int, i: np.ndarray, j: np.ndarray) -> bool:
    parent = list(range(N))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(i.tolist(), j.tolist()):
        parent[find(a)] = find(b)
    return len({find(k) for k in range(N)}) == 1


def edge_residuals(graph: PoseGraph2D, poses=None, Z=None):
    """(E, 3) residual tensor; ``poses`` / ``Z`` may be tensors overriding the graph's."""
    P = graph.poses if poses is None else poses
    Zm = graph.Z if Z is None else Z
    P = ad.as_tensor(P)
    return se2.relative_residual(P[graph.i], P[graph.j], Zm)


def edge_residual(graph: PoseGraph2D, k: int) -> np.ndarray:
    return se2.relative_residual(graph.poses[graph.i[k]], graph.poses[graph.j[k]], graph.Z[k]).numpy()


def graph_cost(graph: PoseGraph2D, poses=None, Z=None):
    """L = 1/2 sum_e r_e' W_e r_e, as a scalar tensor."""
    r = edge_residuals(graph, poses, Z)
    return 0.5 * ad.tsum(r * r * ad.constant(graph.W))


# -- file format --------------------------------------------------------------


def _g(x: float) -> str:
    return format(float(x), ".17g")


def format_graph(graph: PoseGraph2D) -> str:
    lines = [f"NODE {k} {' '.join(_g(v) for v in p)}" for k, p in enumerate(graph.poses)]
    for a, b, z, w in zip(graph.i, graph.j, graph.Z, graph.W):
        lines.append(f"EDGE {a} {b} {' '.join(_g(v) for v in z)} {' '.join(_g(v) for v in w)}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> PoseGraph2D:
    nodes: dict[int, list[float]] = {}
    edges = []
    for ln, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "NODE" and len(parts) == 5:
                k = int(parts[1])
                if k in nodes:
                    raise GraphFormatError(f"line {ln}: duplicate node {k}")
                nodes[k] = [float(v) for v in parts[2:]]
            elif parts[0] == "EDGE" and len(parts) == 9:
                edges.append((int(parts[1]), int(parts[2]), [float(v) for v in parts[3:6]], [float(v) for v in parts[6:]]))
            else:
                raise GraphFormatError(f"line {ln}: expected 'NODE id x y theta' or 'EDGE i j dx dy dtheta w_xx w_yy w_tt'")
        except ValueError as e:
            if isinstance(e, GraphFormatError):
                raise
            raise GraphFormatError(f"line {ln}: {e}") from e
    if not nodes:
        raise GraphFormatError("no NODE lines")
    if sorted(nodes) != list(range(len(nodes))):
        raise GraphFormatError("node ids must be 0..N-1")
    poses = np.array([nodes[k] for k in range(len(nodes))])
    if not edges:
        raise GraphFormatError("no EDGE lines")
    i, j, Z, W = zip(*edges)
    try:
        return PoseGraph2D(poses, i, j, Z, W)
    except ValueError as e:
        raise GraphFormatError(str(e)) from e


def load_graph(path: Union[str, Path]) -> PoseGraph2D:
    return parse_graph(Path(path).read_text())


def save_graph(path: Union[str, Path], graph: PoseGraph2D) -> None:
    Path(path).write_text(format_graph(graph))


# -- synthetic data -----------------------------------------------------------


@dataclass
class Trajectory:
    """Ground truth poses, odometry inputs and precise loop closures."""

    truth: np.ndarray  # (N, 3)
    odo_raw: np.ndarray  # (N-1, 3) noisy relative motions fed to the front-end
    lc_i: np.ndarray
    lc_j: np.ndarray
    lc_Z: np.ndarray
    odo_weight: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    lc_weight: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))

    @property
    def n_nodes(self) -> int:
        return len(self.truth)

    def graph(self, odo_Z: np.ndarray, init: np.ndarray) -> PoseGraph2D:
        N = self.n_nodes
        i = np.concatenate([np.arange(N - 1), self.lc_i])
        j = np.concatenate([np.arange(1, N), self.lc_j])
        Z = np.concatenate([odo_Z, self.lc_Z])
        W = np.concatenate([np.tile(self.odo_weight, (N - 1, 1)), np.tile(self.lc_weight, (len(self.lc_i), 1))])
        return PoseGraph2D(init, i, j, Z, W)


def dead_reckon(start: np.ndarray, motions: np.ndarray) -> np.ndarray:
    out = [np.asarray(start, dtype=np.float64)]
    for m in motions:
        out.append(se2.compose(out[-1], m).numpy())
    return np.array(out)


def looping_trajectory(
    rng: np.random.Generator,
    n_nodes: int = 60,
    laps: float = 3.0,
    radius: float = 4.0,
    odo_sigma: tuple = (0.02, 0.02, 0.005),
    lc_sigma: tuple = (0.005, 0.005, 0.001),
    lc_radius: float = 1.0,
    lc_min_gap: int = 5,
    odo_weight: tuple = (1.0, 1.0, 4.0),
    lc_weight: tuple = (10.0, 10.0, 40.0),
    speed_jitter: float = 0.5,
) -> Trajectory:
    """A jittered circle driven for several laps at varying speed; loop closures join revisits.

    Step lengths vary by up to ``speed_jitter`` of the mean so a forward
    bias and a scale error are distinguishable.

    Loop-closure edges connect nodes at least ``lc_min_gap`` apart whose true
    positions lie within ``lc_radius``.
    """
    if n_nodes < 3:
        raise ValueError("need at least 3 nodes")
    if not 0.0 <= speed_jitter < 1.0:
        raise ValueError("speed_jitter must lie in [0, 1)")
    step = rng.uniform(1.0 - speed_jitter, 1.0 + speed_jitter, size=n_nodes - 1)
    phase = np.concatenate([[0.0], np.cumsum(step)]) * (2 * np.pi * laps / step.sum())
    r = radius * (1.0 + 0.05 * rng.normal(size=n_nodes))
    xy = np.stack([r * np.cos(phase), r * np.sin(phase)], axis=1)
    xy -= xy[0]
    d = np.diff(xy, axis=0)
    heading = np.arctan2(d[:, 1], d[:, 0])
    theta = np.concatenate([heading, heading[-1:]])
    truth = np.column_stack([xy, theta])
    truth[:, 2] = se2.wrap(truth[:, 2]).numpy()
    motions = se2.between(truth[:-1], truth[1:]).numpy()
    odo_raw = motions + rng.normal(size=motions.shape) * np.asarray(odo_sigma)
    pairs = [
        (a, b)
        for a in range(n_nodes)
        for b in range(a + lc_min_gap, n_nodes)
        if np.hypot(*(xy[a] - xy[b])) <= lc_radius
    ]
    lc_i = np.array([a for a, _ in pairs], dtype=np.int64)
    lc_j = np.array([b for _, b in pairs], dtype=np.int64)
    lc_Z = se2.between(truth[lc_i], truth[lc_j]).numpy() if pairs else np.zeros((0, 3))
    lc_Z = lc_Z + rng.normal(size=lc_Z.shape) * np.asarray(lc_sigma)
    return Trajectory(truth, odo_raw, lc_i, lc_j, lc_Z, np.asarray(odo_weight, float), np.asarray(lc_weight, float))
