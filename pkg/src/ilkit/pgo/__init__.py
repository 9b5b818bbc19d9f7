"""SE(2) pose-graph optimisation as a second-order lower level."""

from . import se2
from .graph import (
    GraphFormatError,
    PoseGraph2D,
    Trajectory,
    dead_reckon,
    edge_residual,
    edge_residuals,
    format_graph,
    graph_cost,
    load_graph,
    looping_trajectory,
    parse_graph,
    save_graph,
)
from .solve import GNConfig, GNResult, cost_of, gauss_newton_solve, gn_step, normal_equations, unrolled_poses
from .train import (
    EPS_STAT,
    NotStationary,
    SlamHistoryRow,
    SlamResult,
    SyntheticFrontEnd,
    ate,
    biased_sensor,
    frontend_graph,
    hypergrad_fixture,
    imperative_slam_train,
    one_step_hypergrad,
    recoverable_bias_fixture,
    unrolled_hypergrad,
    write_slam_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
