"""Bilevel problem description and the lower-level solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient

CostFn = Callable[[Tensor, Tensor], Tensor]

LL_KINDS = ("gradient-descent", "adam", "gauss-newton", "levenberg-marquardt", "closed-form")
DIFFERENTIABLE_KINDS = ("gradient-descent", "adam", "gauss-newton", "closed-form")


class LowerSolveError(RuntimeError):
    def __init__(self, step: int, msg: str) -> None:
        super().__init__(f"lower-level step {step}: {msg}")
        self.step = step


@dataclass
class LLSolverConfig:
    kind: str = "gradient-descent"
    steps: int = 100
    step_size: float = 0.1
    tol: float = 1e-8
    damping: float = 1e-3  # Levenberg-Marquardt initial damping

    def __post_init__(self) -> None:
        if self.kind not in LL_KINDS:
            raise ValueError(f"unknown lower-level solver {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass
class BilevelProblem:
    """Upper cost U(psi, phi), lower cost L(psi, phi) and optional scalar constraint.

    ``phi0`` maps psi to the lower-level starting point.  ``closed_form``
    returns argmin_phi L directly and may be written in tensor ops so the
    unrolled route can differentiate it.  ``residual`` is r(psi, phi) with
    L = 0.5 ||r||^2, needed by the Gauss-Newton kinds.
    """

    upper: CostFn
    lower: CostFn
    phi0: Callable[[Any], Any]
    ll_solver: LLSolverConfig = field(default_factory=LLSolverConfig)
    constraint: Optional[CostFn] = None
    constraint_kind: str = "equality"
    closed_form: Optional[Callable[[Tensor], Any]] = None
    residual: Optional[Callable[[Tensor, Tensor], Tensor]] = None

    def __post_init__(self) -> None:
        if self.constraint_kind not in ("equality", "inequality"):
            raise ValueError(f"constraint kind must be equality or inequality, got {self.constraint_kind!r}")


@dataclass
class LowerSolution:
    phi: np.ndarray
    trajectory: Optional[list]
    converged: bool
    grad_norm: float
    steps: int


def _flat(x: Any) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64).reshape(-1)


def lower_grad_norm(problem: BilevelProblem, psi: np.ndarray, phi: np.ndarray) -> float:
    tape = Tape()
    ph = tape.variable(phi)
    (g,) = gradient(problem.lower(ad.constant(psi), ph), [ph])
    return float(np.linalg.norm(g.data))


def _gn_step(r: Tensor, phi: Tensor, damping: float, record: bool) -> Tensor:
    rows = [gradient(r[i], [phi], record=record)[0] for i in range(r.size)]
    J = ad.stack(rows, axis=0)
    JtJ = ad.matmul(J.T, J)
    if damping > 0:
        JtJ = JtJ + ad.constant(damping * np.eye(phi.size))
    return ad.solve(JtJ, ad.matmul(J.T, r))


def unroll(problem: BilevelProblem, psi: Tensor, tape: Tape, record: bool, keep_trajectory: bool = False):
    """Run the configured lower-level solver on ``tape`` starting from phi0(psi).

    With ``record=True`` every step is differentiable with respect to psi and
    all T steps are taken.
    Returns (phi_T tensor, trajectory or None, converged, grad_norm, steps).
    """
    cfg = problem.ll_solver
    traj = [] if keep_trajectory else None
    if cfg.kind == "closed-form":
        if problem.closed_form is None:
            raise ValueError("closed-form solver requested but problem.closed_form is missing")
        phi = problem.closed_form(psi if record else ad.constant(psi.data))
        phi = phi if isinstance(phi, Tensor) else ad.constant(_flat(phi))
        if not np.all(np.isfinite(phi.data)):
            raise LowerSolveError(0, "closed-form solution is not finite")
        if traj is not None:
            traj.append(phi.numpy())
        if problem.constraint is not None:
            # stationarity of L alone is not expected under an active constraint
            return phi, traj, True, 0.0, 1
        gn = lower_grad_norm(problem, psi.numpy(), phi.numpy())
        return phi, traj, gn <= cfg.tol, gn, 1
    if problem.constraint is not None:
        raise ValueError("constrained lower levels need the closed-form solver kind")
    if cfg.kind in ("gauss-newton", "levenberg-marquardt") and problem.residual is None:
        raise ValueError(f"{cfg.kind} needs problem.residual")

    phi = problem.phi0(psi if record else ad.constant(psi.data))
    phi = phi if isinstance(phi, Tensor) else ad.constant(_flat(phi))
    if not phi.tracked:
        phi = tape.variable(phi.data)
    if traj is not None:
        traj.append(phi.numpy())
    m = v = None
    lm = cfg.damping
    gnorm = np.inf
    steps = 0
    for t in range(cfg.steps):
        psi_in = psi if record else ad.constant(psi.data)
        if not record:
            tape = Tape()
            phi = tape.variable(phi.data)
        L = problem.lower(psi_in, phi)
        if not np.isfinite(L.item()):
            raise LowerSolveError(t, f"non-finite lower cost {L.item()}")
        (g,) = gradient(L, [phi], record=record)
        gnorm = float(np.linalg.norm(g.data))
        # a recorded unroll is the T-step map itself, so it never stops early
        if gnorm <= cfg.tol and not record:
            break
        if cfg.kind == "gradient-descent":
            phi = phi - cfg.step_size * g
        elif cfg.kind == "adam":
            b1, b2, eps = 0.9, 0.999, 1e-8
            m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
            v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** (t + 1))
            vhat = v / (1 - b2 ** (t + 1))
            # eps inside the root keeps the step differentiable at v = 0
            phi = phi - cfg.step_size * mhat / ad.sqrt(vhat + eps * eps)
        elif cfg.kind == "gauss-newton":
            r = problem.residual(psi_in, phi)
            phi = phi - cfg.step_size * _gn_step(r, phi, 0.0, record)
        else:
            r = problem.residual(psi_in, phi)
            cand = phi - _gn_step(r, phi, lm, record)
            new_cost = problem.lower(psi_in, cand).item()
            if np.isfinite(new_cost) and new_cost < L.item():
                phi, lm = cand, max(lm / 3.0, 1e-12)
            else:
                lm *= 2.0
        steps = t + 1
        if not np.all(np.isfinite(phi.data)):
            raise LowerSolveError(t, "non-finite iterate")
        if traj is not None:
            traj.append(phi.numpy())
    else:
        gnorm = lower_grad_norm(problem, psi.numpy(), phi.numpy())
    return phi, traj, gnorm <= cfg.tol, gnorm, steps


def solve_lower(problem: BilevelProblem, psi: Any, keep_trajectory: bool = False) -> LowerSolution:
    """Approximate argmin_phi L(psi, phi) with the configured solver."""
    psi = _flat(psi)
    phi, traj, conv, gnorm, steps = unroll(problem, ad.constant(psi), Tape(), record=False, keep_trajectory=keep_trajectory)
    return LowerSolution(phi.numpy().reshape(-1), traj, conv, gnorm, steps)
