"""Matrix-free linear solvers for Hessian systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MatVec = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float  # ||(H + damping I) x - b|| / ||b||
    converged: bool
    damping: float = 0.0

    @property
    def flagged(self) -> bool:
        return not self.converged


class NonPositiveCurvature(Exception):
    pass


def _cg_once(matvec: MatVec, b: np.ndarray, tol: float, max_iter: int, damping: float) -> SolveResult:
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return SolveResult(x, 0, 0.0, True, damping)
    r = b.copy()
    d = r.copy()
    rr = float(r @ r)
    it = 0
    for it in range(1, max_iter + 1):
        Hd = matvec(d) + damping * d
        curv = float(d @ Hd)
        if curv <= 0.0:
            raise NonPositiveCurvature(curv)
        alpha = rr / curv
        x = x + alpha * d
        r = r - alpha * Hd
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * bnorm:
            break
        d = r + (rr_new / rr) * d
        rr = rr_new
    # recursive residuals drift, so report the true one
    true_res = float(np.linalg.norm(matvec(x) + damping * x - b)) / bnorm
    return SolveResult(x, it, true_res, true_res <= tol, damping)


def conjugate_gradient(
    matvec: MatVec,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 1000,
    damping: float = 0.0,
    initial_damping: float = 1e-6,
    max_restarts: int = 80,
) -> SolveResult:
    """Solve ``H x = b`` for symmetric ``H`` given only products ``H d``.

    When a search direction has non-positive curvature the solve restarts on
    ``H + lambda I`` with ``lambda`` starting at ``initial_damping`` and
    doubling until the iteration behaves.
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    lam = damping
    for _ in range(max_restarts):
        try:
            return _cg_once(matvec, b, tol, max_iter, lam)
        except NonPositiveCurvature:
            lam = initial_damping if lam <= 0.0 else 2.0 * lam
    raise RuntimeError(f"conjugate_gradient: still indefinite after damping {lam:.3g}")


def gradient_descent_solve(
    matvec: MatVec,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 10000,
    damping: float = 0.0,
    power_iters: int = 30,
) -> SolveResult:
    """Richardson iteration on ``(H + damping I) x = b``.

    The step is 1/L with L a power-iteration estimate of the largest
    eigenvalue.  Slow, but only needs H positive semidefinite plus damping.
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return SolveResult(x, 0, 0.0, True, damping)
    op = lambda v: matvec(v) + damping * v
    v = b / bnorm
    lmax = 1.0
    for _ in range(power_iters):
        w = op(v)
        lmax = float(np.linalg.norm(w))
        if lmax == 0.0:
            break
        v = w / lmax
    step = 1.0 / (1.1 * lmax) if lmax > 0 else 1.0
    res = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        r = op(x) - b
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            break
        x = x - step * r
    res = float(np.linalg.norm(op(x) - b)) / bnorm
    return SolveResult(x, it, res, res <= tol, damping)


def linear_solve(kind: str, matvec: MatVec, b: np.ndarray, tol: float, max_iter: int, damping: float = 0.0) -> SolveResult:
    if kind == "conjugate-gradient":
        return conjugate_gradient(matvec, b, tol, max_iter, damping)
    if kind == "gradient-descent":
        return gradient_descent_solve(matvec, b, tol, max_iter, damping)
    raise ValueError(f"unknown linear solver {kind!r}")
