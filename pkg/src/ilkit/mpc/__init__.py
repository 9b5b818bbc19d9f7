"""Differentiable finite-horizon MPC and imperative model/denoiser learning."""

from .lqr import LqrGradients, LqrSolution, MpcProblem, SingularControlWeight, kkt_residual, lqr_backward, lqr_cost, lqr_solve
from .metrics import ControlMetrics, control_metrics
from .plant import LinearPlant, plant_A, plant_B, simulate_step
from .train import EpisodeRecord, IMpcConfig, IMpcResult, denoise, impc_train, init_denoiser, mpc_control, mpc_problem, reference, write_mpc_csv

__all__ = [name for name in dir() if not name.startswith("_")]
