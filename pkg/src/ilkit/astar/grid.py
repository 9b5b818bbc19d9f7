"""Occupancy grids, map files, maze generation and a Dijkstra oracle."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

SQRT2 = float(np.sqrt(2.0))
# fixed neighbour order: straight moves first, then diagonals
OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))
STEP_COST = (1.0, 1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2, SQRT2)

Cell = tuple[int, int]


class MapFormatError(ValueError):
    pass


@dataclass
class GridPlanInstance:
    grid: np.ndarray  # (H, W), 1 = obstacle
    start: Cell
    goal: Cell

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=np.int8)
        self.start = (int(self.start[0]), int(self.start[1]))
        self.goal = (int(self.goal[0]), int(self.goal[1]))
        H, W = self.grid.shape
        if H < 3 or W < 3:
            raise ValueError(f"grid must be at least 3x3, got {H}x{W}")
        if self.start == self.goal:
            raise ValueError("start and goal coincide")
        for name, (r, c) in (("start", self.start), ("goal", self.goal)):
            if not (0 <= r < H and 0 <= c < W):
                raise ValueError(f"{name} {(r, c)} outside the {H}x{W} grid")
            if self.grid[r, c]:
                raise ValueError(f"{name} {(r, c)} is on an obstacle")

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def free(self) -> np.ndarray:
        return self.grid == 0

    def encode(self) -> np.ndarray:
        """Three channels (H, W, 3): obstacle map, one-hot start, one-hot goal."""
        x = np.zeros(self.shape + (3,))
        x[..., 0] = self.grid
        x[self.start + (1,)] = 1.0
        x[self.goal + (2,)] = 1.0
        return x

    def euclidean(self) -> np.ndarray:
        H, W = self.shape
        r, c = np.mgrid[0:H, 0:W]
        return np.hypot(r - self.goal[0], c - self.goal[1])


def parse_map(text: str) -> GridPlanInstance:
    rows = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise MapFormatError("empty map")
    W = len(rows[0])
    if any(len(r) != W for r in rows):
        raise MapFormatError("map rows have different lengths")
    grid = np.zeros((len(rows), W), dtype=np.int8)
    starts, goals = [], []
    for i, row in enumerate(rows):
        for j, ch in enumerate(row):
            if ch == "#":
                grid[i, j] = 1
            elif ch == "S":
                starts.append((i, j))
            elif ch == "G":
                goals.append((i, j))
            elif ch != ".":
                raise MapFormatError(f"bad character {ch!r} at line {i + 1}, column {j + 1}")
    if len(starts) != 1 or len(goals) != 1:
        raise MapFormatError(f"need exactly one S and one G, found {len(starts)} and {len(goals)}")
    try:
        return GridPlanInstance(grid, starts[0], goals[0])
    except ValueError as e:
        raise MapFormatError(str(e)) from e


def format_map(inst: GridPlanInstance) -> str:
    chars = np.where(inst.grid == 1, "#", ".").astype("<U1")
    chars[inst.start] = "S"
    chars[inst.goal] = "G"
    return "\n".join("".join(r) for r in chars) + "\n"


def load_map(path: Union[str, Path]) -> GridPlanInstance:
    return parse_map(Path(path).read_text())


def save_map(path: Union[str, Path], inst: GridPlanInstance) -> None:
    Path(path).write_text(format_map(inst))


def neighbors(free: np.ndarray, r: int, c: int):
    H, W = free.shape
    for (dr, dc), cost in zip(OFFSETS, STEP_COST):
        rr, cc = r + dr, c + dc
        if 0 <= rr < H and 0 <= cc < W and free[rr, cc]:
            yield rr, cc, cost


def dijkstra(inst: GridPlanInstance, source: Optional[Cell] = None) -> np.ndarray:
    """Distance from ``source`` (default: start) to every cell; inf where unreachable."""
    free = inst.free
    src = inst.start if source is None else source
    dist = np.full(inst.shape, np.inf)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        for rr, cc, cost in neighbors(free, r, c):
            nd = d + cost
            if nd < dist[rr, cc]:
                dist[rr, cc] = nd
                heapq.heappush(heap, (nd, (rr, cc)))
    return dist


def optimal_path(inst: GridPlanInstance, dist_to_goal: Optional[np.ndarray] = None) -> Optional[list[Cell]]:
    """One shortest path by descending the distance-to-goal field (ties: neighbour order)."""
    dg = dijkstra(inst, inst.goal) if dist_to_goal is None else dist_to_goal
    if not np.isfinite(dg[inst.start]):
        return None
    free = inst.free
    path = [inst.start]
    cur = inst.start
    while cur != inst.goal:
        best = None
        for rr, cc, cost in neighbors(free, *cur):
            if abs(cost + dg[rr, cc] - dg[cur]) <= 1e-9 and (best is None or dg[rr, cc] < dg[best]):
                best = (rr, cc)
        cur = best
        path.append(cur)
    return path


def path_cost(path: list[Cell]) -> float:
    total = 0.0
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        total += SQRT2 if (r0 != r1 and c0 != c1) else 1.0
    return total


def path_mask(shape: tuple[int, int], path: list[Cell]) -> np.ndarray:
    m = np.zeros(shape)
    for cell in path:
        m[cell] = 1.0
    return m


def maze(
    rng: np.random.Generator,
    size: int = 32,
    min_room: int = 4,
    door: int = 1,
    perforation: float = 0.05,
) -> np.ndarray:
    """Recursive-division maze with a solid border, then random wall perforation."""
    g = np.zeros((size, size), dtype=np.int8)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = 1

    def divide(r0: int, c0: int, r1: int, c1: int) -> None:
        # chamber interior is rows r0..r1, cols c0..c1 inclusive
        h, w = r1 - r0 + 1, c1 - c0 + 1
        if h < 2 * min_room + 1 and w < 2 * min_room + 1:
            return
        horizontal = h > w if h != w else bool(rng.integers(2))
        if horizontal and h >= 2 * min_room + 1:
            wr = int(rng.integers(r0 + min_room, r1 - min_room + 1))
            g[wr, c0 : c1 + 1] = 1
            d = int(rng.integers(c0, c1 - door + 2))
            g[wr, d : d + door] = 0
            divide(r0, c0, wr - 1, c1)
            divide(wr + 1, c0, r1, c1)
        elif w >= 2 * min_room + 1:
            wc = int(rng.integers(c0 + min_room, c1 - min_room + 1))
            g[r0 : r1 + 1, wc] = 1
            d = int(rng.integers(r0, r1 - door + 2))
            g[d : d + door, wc] = 0
            divide(r0, c0, r1, wc - 1)
            divide(r0, wc + 1, r1, c1)

    divide(1, 1, size - 2, size - 2)
    interior = np.zeros_like(g, dtype=bool)
    interior[1:-1, 1:-1] = True
    holes = interior & (g == 1) & (rng.random(g.shape) < perforation)
    g[holes] = 0
    return g


def random_instance(
    rng: np.random.Generator,
    size: int = 32,
    min_dist: Optional[float] = None,
    **maze_kw,
) -> GridPlanInstance:
    """A maze with start and goal drawn from one connected component, far apart."""
    min_dist = size * 0.75 if min_dist is None else min_dist
    for _ in range(100):
        g = maze(rng, size, **maze_kw)
        free = np.argwhere(g == 0)
        for _ in range(20):
            s = tuple(free[rng.integers(len(free))])
            dist = dijkstra(GridPlanInstance(g, s, tuple(free[0]) if tuple(free[0]) != s else tuple(free[1])), s)
            far = np.argwhere(np.isfinite(dist) & (dist >= min_dist))
            if len(far):
                goal = tuple(far[rng.integers(len(far))])
                return GridPlanInstance(g, s, goal)
    raise RuntimeError("could not place a start/goal pair; relax min_dist")
