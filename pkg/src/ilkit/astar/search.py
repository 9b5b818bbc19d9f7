"""Classic and differentiable A* on 8-connected grids."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .. import ad
from ..ad import Tensor
from .grid import SQRT2, Cell, GridPlanInstance, neighbors, path_cost


@dataclass
class SearchResult:
    path: Optional[list]  # None when the goal is unreachable
    path_cost: float
    explored: Any  # (H, W) ndarray, or Tensor for the differentiable planner
    explored_count: float
    iterations: int = 0
    flagged: bool = False
    goal_mass: float = 1.0

    @property
    def found(self) -> bool:
        return self.path is not None


def _backtrack(parent: dict, goal: Cell) -> list[Cell]:
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _h_array(inst: GridPlanInstance, h_field: Any) -> np.ndarray:
    h = np.zeros(inst.shape) if h_field is None else np.asarray(getattr(h_field, "data", h_field), dtype=np.float64)
    if h.shape != inst.shape:
        raise ValueError(f"h field shape {h.shape} differs from grid {inst.shape}")
    return h


def astar_classic(inst: GridPlanInstance, h_field: Any = None, allowed: Optional[np.ndarray] = None) -> SearchResult:
    """Graph-search A*: a closed node is never reopened.

    Ties in f are broken by smaller h, then by row-major cell index, matching
    the differentiable planner.  ``allowed`` optionally restricts the search
    to a subset of free cells.
    """
    h = _h_array(inst, h_field)
    free = inst.free if allowed is None else inst.free & allowed
    H, W = inst.shape
    g = {inst.start: 0.0}
    parent: dict = {inst.start: None}
    closed = np.zeros(inst.shape, dtype=bool)
    heap = [(h[inst.start], h[inst.start], inst.start[0] * W + inst.start[1], inst.start)]
    it = 0
    while heap:
        f, _, _, cur = heapq.heappop(heap)
        if closed[cur] or f > g[cur] + h[cur]:
            continue
        closed[cur] = True
        it += 1
        if cur == inst.goal:
            path = _backtrack(parent, cur)
            return SearchResult(path, path_cost(path), closed.astype(float), float(closed.sum()), it)
        gc = g[cur]
        for rr, cc, cost in neighbors(free, *cur):
            if closed[rr, cc]:
                continue
            ng = gc + cost
            if ng < g.get((rr, cc), np.inf):
                g[(rr, cc)] = ng
                parent[(rr, cc)] = cur
                heapq.heappush(heap, (ng + h[rr, cc], h[rr, cc], rr * W + cc, (rr, cc)))
    return SearchResult(None, float("inf"), closed.astype(float), float(closed.sum()), it)


def _select(f: np.ndarray, h: np.ndarray, open_: np.ndarray) -> int:
    """Index of the open cell with least f, ties by h then row-major index."""
    idx = np.flatnonzero(open_)
    fo = f.reshape(-1)[idx]
    cand = idx[fo == fo.min()]
    if cand.size > 1:
        ho = h.reshape(-1)[cand]
        cand = cand[ho == ho.min()]
    return int(cand[0])


def diff_astar_forward(
    inst: GridPlanInstance,
    h_field: Any,
    temperature: float = 1.0,
    max_iters: Optional[int] = None,
) -> SearchResult:
    """A* whose node selection is a straight-through soft argmin.

    Forward values are exactly those of hard A* (same tie rule as
    ``astar_classic``); the backward pass sees, at every step, the softmax of
    -(g + h)/temperature over the open set.  g, the open set and parents are
    bookkeeping and carry no gradient.  The returned ``explored`` tensor is
    the sum of the per-step selections, so it depends on ``h_field`` when
    that is a tracked tensor.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    h_t = h_field if isinstance(h_field, Tensor) else ad.constant(_h_array(inst, h_field))
    if h_t.shape != inst.shape:
        raise ValueError(f"h field shape {h_t.shape} differs from grid {inst.shape}")
    h = h_t.data
    H, W = inst.shape
    n = H * W
    max_iters = n if max_iters is None else max_iters
    free = inst.free.reshape(-1)
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    open_ = np.zeros(n, dtype=bool)
    closed = np.zeros(n, dtype=bool)
    s, goal = inst.start[0] * W + inst.start[1], inst.goal[0] * W + inst.goal[1]
    rows, cols = np.divmod(np.arange(n), W)
    g[s] = 0.0
    open_[s] = True
    neg_h = ad.reshape(h_t, (n,)) * (-1.0 / temperature)
    selections = []
    it = 0
    reached = False
    while it < max_iters and open_.any():
        f = g + h.reshape(-1)
        k = _select(f.reshape(H, W), h, open_)
        gmask = np.where(open_, -g / temperature, 0.0)
        p = ad.softmax(neg_h + ad.constant(gmask), mask=open_)
        hard = np.zeros(n)
        hard[k] = 1.0
        # straight-through: forward value is exactly the hard one-hot
        selections.append(ad.constant(hard) + (p - ad.stop_gradient(p)))
        open_[k] = False
        closed[k] = True
        it += 1
        if k == goal:
            reached = True
            break
        # expansion: the 3x3 aggregate of the selected one-hot marks its neighbours
        nb = (ad.aggregate3x3_array(hard.reshape(H, W)).reshape(-1) > 0) & free & ~closed
        r, c = divmod(k, W)
        step = np.where((rows != r) & (cols != c), SQRT2, 1.0)
        ng = g[k] + step
        better = nb & (ng < g)
        g[better] = ng[better]
        parent[better] = k
        open_ |= better
    explored = ad.reshape(ad.tsum(ad.stack(selections, axis=0), axis=0), (H, W)) if selections else ad.constant(np.zeros((H, W)))
    if not reached:
        return SearchResult(None, float("inf"), explored, float(explored.data.sum()), it, flagged=True, goal_mass=float(closed[goal]))
    path = [goal]
    while parent[path[-1]] >= 0:
        path.append(int(parent[path[-1]]))
    cells = [divmod(k, W) for k in reversed(path)]
    return SearchResult(cells, path_cost(cells), explored, float(explored.data.sum()), it)
