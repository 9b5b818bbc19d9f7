"""Grid planning with classic and differentiable A*, and a learned heuristic."""

from .grid import (
    OFFSETS,
    SQRT2,
    GridPlanInstance,
    MapFormatError,
    dijkstra,
    format_map,
    load_map,
    maze,
    neighbors,
    optimal_path,
    parse_map,
    path_cost,
    path_mask,
    random_instance,
    save_map,
)
from .net import LN2, compose_heuristic, features, heuristic_field, heuristic_net_forward, init_heuristic_net, planner_heuristic
from .search import SearchResult, astar_classic, diff_astar_forward
from .train import (
    IAStarConfig,
    IAStarHistory,
    MapEval,
    evaluate_map,
    metric_exp_rt,
    search_area_cost,
    train_iastar,
    ul_cost,
    ul_step_grad,
    validate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
