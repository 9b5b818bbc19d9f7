"""Single-agent TSP lower level (nearest neighbour + 2-opt) and the min-max cost."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .instance import MtspInstance

_IMPROVE = 1e-12  # a 2-opt move must shorten the tour by more than this


@dataclass
class AgentTour:
    order: list  # city indices in visiting order; the depot is implicit at both ends
    length: float


def _dist(points: np.ndarray) -> np.ndarray:
    d = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(d * d, axis=-1))


def route_length(depot: np.ndarray, points: np.ndarray, order) -> float:
    """Depot -> points[order] -> depot."""
    if len(order) == 0:
        return 0.0
    p = np.vstack([depot, np.asarray(points)[list(order)], depot])
    return float(np.sum(np.sqrt(np.sum(np.diff(p, axis=0) ** 2, axis=1))))


def _nearest_neighbour(D: np.ndarray) -> list:
    """Node 0 is the depot; ties go to the lowest index (argmin)."""
    n = len(D)
    route = [0]
    left = np.ones(n, dtype=bool)
    left[0] = False
    for _ in range(n - 1):
        d = np.where(left, D[route[-1]], np.inf)
        k = int(np.argmin(d))
        route.append(k)
        left[k] = False
    return route + [0]


def two_opt_deltas(D: np.ndarray, route: list) -> np.ndarray:
    """delta[i, j]: change in length from reversing route[i..j], for 1 <= i < j <= len-2; +inf elsewhere."""
    r = np.asarray(route)
    n = len(r)
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    valid = (i >= 1) & (j > i) & (j <= n - 2)
    ii, jj = np.clip(i, 1, n - 2), np.clip(j, 1, n - 2)
    delta = D[r[ii - 1], r[jj]] + D[r[ii], r[jj + 1]] - D[r[ii - 1], r[ii]] - D[r[jj], r[jj + 1]]
    return np.where(valid, delta, np.inf)


def _length(D: np.ndarray, route: list) -> float:
    r = np.asarray(route)
    return float(np.sum(D[r[:-1], r[1:]]))


def _two_opt(D: np.ndarray, route: list, trace: Optional[list] = None) -> list:
    """Best-improvement 2-opt until no move shortens the tour."""
    route = list(route)
    if trace is not None:
        trace.append(_length(D, route))
    if len(route) < 5:
        return route
    while True:
        delta = two_opt_deltas(D, route)
        k = int(np.argmin(delta))
        i, j = divmod(k, len(route))
        if not delta[i, j] < -_IMPROVE:
            return route
        route[i : j + 1] = route[i : j + 1][::-1]
        if trace is not None:
            trace.append(_length(D, route))


def tsp_solve(depot, points, trace: Optional[list] = None) -> AgentTour:
    """Nearest-neighbour tour from the depot, improved to a 2-opt local optimum.

    Deterministic given the input order. ``order`` indexes ``points``.
    ``trace`` collects the tour length after construction and after each move.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return AgentTour([], 0.0)
    dep = np.asarray(depot, dtype=np.float64).reshape(2)
    D = _dist(np.vstack([dep, pts]))
    route = _two_opt(D, _nearest_neighbour(D), trace)
    order = [k - 1 for k in route[1:-1]]
    return AgentTour(order, route_length(dep, pts, order))


def brute_force_tsp(depot, points) -> AgentTour:
    """Exhaustive optimum over all visiting orders (small N only)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) > 9:
        raise ValueError("brute force is limited to 9 points")
    best = AgentTour([], 0.0 if len(pts) == 0 else np.inf)
    for perm in itertools.permutations(range(len(pts))):
        if len(perm) > 1 and perm[0] > perm[-1]:
            continue  # reversed tours have equal length
        L = route_length(depot, pts, perm)
        if L < best.length:
            best = AgentTour(list(perm), L)
    return best


def minmax_cost(tours) -> float:
    """Longest route among the agents' tours (or plain lengths)."""
    lengths = [t.length if isinstance(t, AgentTour) else float(t) for t in tours]
    if not lengths:
        raise ValueError("no tours")
    return max(lengths)


def allocation_tours(inst: MtspInstance, assignment) -> list:
    """Solve one TSP per agent for a per-city agent index; tour orders index ``inst.cities``."""
    a = np.asarray(assignment, dtype=np.int64).reshape(-1)
    if a.shape != (inst.n_cities,) or a.min() < 0 or a.max() >= inst.agents:
        raise ValueError("assignment must give each city an agent index in [0, M)")
    tours = []
    for j in range(inst.agents):
        idx = np.flatnonzero(a == j)
        t = tsp_solve(inst.depot, inst.cities[idx])
        tours.append(AgentTour([int(idx[k]) for k in t.order], t.length))
    return tours


def allocation_cost(inst: MtspInstance, assignment) -> float:
    return minmax_cost(allocation_tours(inst, assignment))


def angular_sector_assignment(inst: MtspInstance) -> np.ndarray:
    """Greedy baseline: cities sorted by bearing from the depot and cut into M contiguous, equal-count sectors.

    The sweep starts after the widest angular gap, so no sector straddles it.
    """
    d = inst.cities - inst.depot
    ang = np.arctan2(d[:, 1], d[:, 0])
    order = np.lexsort((np.arange(inst.n_cities), ang))
    sa = ang[order]
    gaps = np.diff(np.concatenate([sa, [sa[0] + 2 * np.pi]]))
    start = (int(np.argmax(gaps)) + 1) % inst.n_cities
    order = np.roll(order, -start)
    out = np.empty(inst.n_cities, dtype=np.int64)
    for j, chunk in enumerate(np.array_split(order, inst.agents)):
        out[chunk] = j
    return out
