"""Imperative training of the heuristic network and the Exp/Rt metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .. import ad
from ..ad import Adam, ParameterStore, Tape, Tensor, gradient
from .grid import GridPlanInstance, dijkstra, optimal_path, path_mask
from .net import compose_heuristic, heuristic_field, heuristic_net_forward, init_heuristic_net, planner_heuristic
from .search import SearchResult, astar_classic, diff_astar_forward


def search_area_cost(result: SearchResult, reference: Optional[np.ndarray] = None) -> Tensor:
    """C_a: search area measured against the optimal path mu*.

    Without a reference it is the explored mass.  With the mu* mask it is the
    L1 gap |explored - mu*|: cells explored off mu* plus mu* cells left
    unexplored, so the heuristic is pushed to expand exactly the optimal path.
    """
    e = result.explored if isinstance(result.explored, Tensor) else ad.constant(result.explored)
    if reference is None:
        return ad.tsum(e)
    ref = ad.constant(reference)
    return ad.tsum(e * (1.0 - ref)) + ad.tsum((1.0 - e) * ref)


def ul_cost(result: SearchResult, w_a: float, w_l: float, reference: Optional[np.ndarray] = None) -> Tensor:
    """w_a C_a + w_l C_l.  C_l is the path cost, the lower-level objective."""
    if not result.found:
        raise ValueError("upper cost needs a search result that reached the goal")
    out = ad.constant(w_l * result.path_cost)
    if w_a != 0.0:
        out = out + w_a * search_area_cost(result, reference)
    return out


def metric_exp_rt(S_base: float, S: float, t_base: float, t: float) -> tuple[float, float]:
    if not S_base > 0 or not t_base > 0:
        raise ValueError("baselines must be positive")
    return 100.0 * (S_base - S) / S_base, 100.0 * (t_base - t) / t_base


@dataclass
class MapEval:
    map_id: int
    exp_pct: float
    rt_pct: float
    cost_ratio: float
    explored_base: float
    explored: float


def _timed(fn, repeats: int) -> tuple[SearchResult, float]:
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def evaluate_map(map_id: int, inst: GridPlanInstance, params, timing_repeats: int = 3) -> MapEval:
    """Exp and Rt against Euclidean A*, and path cost relative to Dijkstra.

    Rt times the hard planner under the learned field, restricted to cells
    with soft explored mass >= 1e-3 (taken from the hard search's closed set,
    widened by one ring so the restriction never removes the found path).
    """
    opt = dijkstra(inst)[inst.goal]
    base, t_base = _timed(lambda: astar_classic(inst, inst.euclidean()), timing_repeats)
    h = planner_heuristic(inst, heuristic_field(params, inst))
    learned = astar_classic(inst, h)
    allowed = (learned.explored + ad.aggregate3x3_array(learned.explored)) >= 1e-3
    _, t = _timed(lambda: astar_classic(inst, h, allowed=allowed), timing_repeats)
    exp_pct, rt_pct = metric_exp_rt(base.explored_count, learned.explored_count, t_base, t)
    return MapEval(map_id, exp_pct, rt_pct, learned.path_cost / opt, base.explored_count, learned.explored_count)


@dataclass
class IAStarConfig:
    epochs: int = 3
    lr: float = 3e-4
    w_a: float = 1.0
    w_l: float = 1.0
    temperature: float = 1.0
    batch: int = 8
    width: int = 16
    eval_every: int = 10  # optimizer steps between validation passes
    min_cost_ok: float = 0.99  # fraction of validation maps within 1.05 of optimal


@dataclass
class IAStarHistory:
    step_cost: list = field(default_factory=list)
    val_step: list = field(default_factory=list)
    val_exp: list = field(default_factory=list)
    val_cost_ok: list = field(default_factory=list)
    best_step: int = -1


def ul_step_grad(params: ParameterStore, inst: GridPlanInstance, cfg: IAStarConfig, reference: Optional[np.ndarray]):
    """One map: (U value, gradient dict).  The lower level is solved by the planner itself."""
    tape = Tape()
    bound = params.bind(tape)
    field_t = heuristic_net_forward(bound, inst)
    h = compose_heuristic(ad.constant(inst.euclidean()), field_t)
    res = diff_astar_forward(inst, h, cfg.temperature)
    U = ul_cost(res, cfg.w_a, cfg.w_l, reference)
    names = params.trainable_names()
    grads = gradient(U, [bound[k] for k in names])
    return U.item(), {k: g.numpy() for k, g in zip(names, grads)}


def validate(params, maps: Sequence[GridPlanInstance]) -> tuple[float, float]:
    """Mean Exp and the fraction of maps with path cost within 1.05 of optimal."""
    evals = [evaluate_map(j, m, params, timing_repeats=1) for j, m in enumerate(maps)]
    return float(np.mean([e.exp_pct for e in evals])), float(np.mean([e.cost_ratio <= 1.05 + 1e-12 for e in evals]))


def train_iastar(
    train_maps: Sequence[GridPlanInstance],
    cfg: IAStarConfig,
    rng: np.random.Generator,
    validation: Sequence[GridPlanInstance] = (),
    params: Optional[ParameterStore] = None,
    log: Optional[Callable[[str], None]] = None,
) -> tuple[ParameterStore, IAStarHistory]:
    """Alternate the closed-form lower level (A*) with Adam steps on the network.

    The reference for the search-area cost is the lower level's optimal path
    mu*, computed by Dijkstra once per map.  With a validation set, the
    returned weights are the checkpoint with the highest validation Exp
    among those keeping ``min_cost_ok`` of paths within 1.05 of optimal
    (the initial weights, i.e. Euclidean A*, always qualify).
    """
    params = init_heuristic_net(rng, cfg.width) if params is None else params
    opt = Adam(cfg.lr)
    refs = [path_mask(m.shape, optimal_path(m)) for m in train_maps]
    hist = IAStarHistory()
    best, best_exp = params.copy(), -np.inf
    n = len(train_maps)
    step = 0

    def checkpoint() -> None:
        nonlocal best, best_exp
        exp, ok = validate(params.values(), validation)
        hist.val_step.append(step)
        hist.val_exp.append(exp)
        hist.val_cost_ok.append(ok)
        if ok >= cfg.min_cost_ok and exp > best_exp:
            best, best_exp, hist.best_step = params.copy(), exp, step
        if log:
            log(f"step {step}: validation Exp {exp:.1f}%, within 1.05 of optimal {100 * ok:.0f}%")

    if validation:
        checkpoint()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b0 in range(0, n, cfg.batch):
            idx = order[b0 : b0 + cfg.batch]
            acc = {k: np.zeros_like(params[k].value) for k in params.trainable_names()}
            total = 0.0
            for i in idx:
                U, g = ul_step_grad(params, train_maps[i], cfg, refs[i])
                total += U
                for k in acc:
                    acc[k] += g[k] / len(idx)
            hist.step_cost.append(total / len(idx))
            params.assign(opt.step(params.values(), acc))
            step += 1
            if validation and step % cfg.eval_every == 0:
                checkpoint()
    if validation:
        if step % cfg.eval_every:
            checkpoint()
        return best, hist
    return params, hist
