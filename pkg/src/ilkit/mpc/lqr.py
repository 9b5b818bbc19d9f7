"""Finite-horizon LQ control: affine Riccati recursion and its adjoint."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient


class SingularControlWeight(ValueError):
    pass


@dataclass
class MpcProblem:
    """Cost sum_k 1/2 (x_k - r_k)' Q_k (x_k - r_k) + q_k' x_k + 1/2 u_k' R_k u_k,
    k = 0..T-1, plus the same state terms at k = T with Qf.

    ``reference`` and ``q`` are (T+1, n); Q may be (n, n) or (T, n, n), R may
    be (m, m) or (T, m, m).  ``qu`` is an optional (T, m) linear control term.
    """

    horizon: int
    Q: np.ndarray
    R: np.ndarray
    x0: np.ndarray
    Qf: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    qu: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        self.x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        n, T = self.x0.size, self.horizon
        self.Q = _per_step(self.Q, T, n, "Q")
        m = np.atleast_2d(np.asarray(self.R, dtype=np.float64)).shape[-1]
        self.R = _per_step(self.R, T, m, "R")
        self.Qf = self.Q[-1].copy() if self.Qf is None else np.asarray(self.Qf, dtype=np.float64).reshape(n, n)
        self.reference = np.zeros((T + 1, n)) if self.reference is None else np.asarray(self.reference, dtype=np.float64).reshape(T + 1, n)
        self.q = np.zeros((T + 1, n)) if self.q is None else np.asarray(self.q, dtype=np.float64).reshape(T + 1, n)
        self.qu = np.zeros((T, m)) if self.qu is None else np.asarray(self.qu, dtype=np.float64).reshape(T, m)
        for name, M in (("Q", self.Q), ("Qf", self.Qf[None])):
            if not np.allclose(M, np.swapaxes(M, -1, -2), atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n(self) -> int:
        return self.x0.size

    @property
    def m(self) -> int:
        return self.R.shape[-1]


def _per_step(M, T: int, d: int, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim <= 1 and M.size == d * d:
        M = M.reshape(d, d)
    if M.ndim == 2:
        M = np.broadcast_to(M, (T, d, d)).copy()
    if M.shape != (T, d, d):
        raise ValueError(f"{name} must be ({d}, {d}) or ({T}, {d}, {d}), got {M.shape}")
    return M


@dataclass
class LqrSolution:
    states: np.ndarray  # (T+1, n)
    controls: np.ndarray  # (T, m)
    K: np.ndarray  # (T, m, n) feedback gains, u_k = K_k x_k + k_k
    k: np.ndarray  # (T, m)
    P: np.ndarray  # (T+1, n, n) value Hessians
    s: np.ndarray  # (T+1, n) value gradients at x = 0
    costates: np.ndarray  # (T+1, n) dynamics multipliers, lambda_k = -(P_k x_k + s_k)

    @property
    def cost_to_go(self) -> Callable[[int, np.ndarray], float]:
        return lambda t, x: float(0.5 * x @ self.P[t] @ x + self.s[t] @ x)


def lqr_solve(A: np.ndarray, B: np.ndarray, problem: MpcProblem) -> LqrSolution:
    """Backward Riccati pass, forward rollout.  The trajectory satisfies the
    dynamics exactly and is the unique minimiser when every R_k is PD."""
    A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    T, n, m = problem.horizon, problem.n, problem.m
    if A.shape != (n, n) or B.shape != (n, m):
        raise ValueError(f"A must be ({n}, {n}) and B ({n}, {m}); got {A.shape} and {B.shape}")
    for t in range(T):
        if np.linalg.eigvalsh(0.5 * (problem.R[t] + problem.R[t].T)).min() <= 0:
            raise SingularControlWeight(f"control weight R at step {t} is not positive definite")
    P = np.zeros((T + 1, n, n))
    s = np.zeros((T + 1, n))
    K = np.zeros((T, m, n))
    kff = np.zeros((T, m))
    P[T] = problem.Qf
    s[T] = problem.q[T] - problem.Qf @ problem.reference[T]
    for t in range(T - 1, -1, -1):
        Pn, sn = P[t + 1], s[t + 1]
        Quu = problem.R[t] + B.T @ Pn @ B
        Qux = B.T @ Pn @ A
        Qu = B.T @ sn + problem.qu[t]
        try:
            sol = np.linalg.solve(Quu, np.column_stack([Qux, Qu]))
        except np.linalg.LinAlgError as e:
            raise SingularControlWeight(f"control block singular at step {t}") from e
        K[t], kff[t] = -sol[:, :n], -sol[:, n]
        Qt = problem.Q[t]
        P[t] = Qt + A.T @ Pn @ A + Qux.T @ K[t]
        s[t] = problem.q[t] - Qt @ problem.reference[t] + A.T @ sn + Qux.T @ kff[t]
    x = np.zeros((T + 1, n))
    u = np.zeros((T, m))
    x[0] = problem.x0
    for t in range(T):
        u[t] = K[t] @ x[t] + kff[t]
        x[t + 1] = A @ x[t] + B @ u[t]
    lam = -(np.einsum("tij,tj->ti", P, x) + s)
    return LqrSolution(x, u, K, kff, P, s, lam)


def lqr_cost(problem: MpcProblem, states: np.ndarray, controls: np.ndarray) -> float:
    dx = states - problem.reference
    c = 0.0
    for t in range(problem.horizon):
        c += 0.5 * dx[t] @ problem.Q[t] @ dx[t] + problem.q[t] @ states[t]
        c += 0.5 * controls[t] @ problem.R[t] @ controls[t] + problem.qu[t] @ controls[t]
    T = problem.horizon
    return float(c + 0.5 * dx[T] @ problem.Qf @ dx[T] + problem.q[T] @ states[T])


def kkt_residual(
    A: Tensor,
    B: Tensor,
    x0: Tensor,
    Q: Tensor,
    R: Tensor,
    Qf: Tensor,
    reference: Tensor,
    problem: MpcProblem,
    sol: LqrSolution,
) -> tuple[Tensor, Tensor, Tensor]:
    """Stationarity and dynamics residuals at the fixed optimum (x*, u*, lambda*).

    The data (A, B, x0, weights, reference) are tensors; the optimum is a
    constant.  Lagrangian: cost + lambda_0'(x_0 - x0) + sum lambda_{k+1}'(x_{k+1} - A x_k - B u_k).
    Q and R are shared across steps here.
    Returns (r_x (T+1, n), r_u (T, m), r_h (T+1, n)).
    """
    T = problem.horizon
    X = ad.constant(sol.states)
    U = ad.constant(sol.controls)
    L = ad.constant(sol.costates)
    dX = X - reference
    Qdx = ad.matmul(dX[:T], Q)
    Qfdx = ad.matmul(dX[T:], Qf)
    stage = ad.concat([Qdx, Qfdx], axis=0) + ad.constant(problem.q)
    back = ad.concat([ad.matmul(L[1:], A), ad.constant(np.zeros((1, problem.n)))], axis=0)
    r_x = stage + L - back
    r_u = ad.matmul(U, R) + ad.constant(problem.qu) - ad.matmul(L[1:], B)
    pred = ad.matmul(X[:T], ad.transpose(A)) + ad.matmul(U, ad.transpose(B))
    r_h = ad.concat([ad.reshape(X[0] - x0, (1, problem.n)), X[1:] - pred], axis=0)
    return r_x, r_u, r_h


@dataclass
class LqrGradients:
    A: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray
    reference: np.ndarray


def _shared(M: np.ndarray, name: str) -> np.ndarray:
    if not np.allclose(M, M[0]):
        raise ValueError(f"lqr_backward needs {name} shared across steps")
    return M[0]


def lqr_backward(
    A: np.ndarray,
    B: np.ndarray,
    problem: MpcProblem,
    sol: LqrSolution,
    grad_states: Optional[np.ndarray] = None,
    grad_controls: Optional[np.ndarray] = None,
) -> LqrGradients:
    """Vector-Jacobian product of the optimal trajectory w.r.t. the problem data.

    One Newton step on the KKT system taken at the optimum,
    z+ = z* - K^-1 r(z*; data), is differentiated with z* and K held fixed.
    Since r(z*) = 0 this equals implicit differentiation.  The adjoint
    y = K^-1 g is itself an LQ problem with linear terms -g, solved by the
    same Riccati recursion; then grad = -d<y, r>/d data on the tape.
    """
    T, n, m = problem.horizon, problem.n, problem.m
    gx = np.zeros((T + 1, n)) if grad_states is None else np.asarray(grad_states, dtype=np.float64).reshape(T + 1, n)
    gu = np.zeros((T, m)) if grad_controls is None else np.asarray(grad_controls, dtype=np.float64).reshape(T, m)
    Qs, Rs = _shared(problem.Q, "Q"), _shared(problem.R, "R")
    adj = MpcProblem(T, problem.Q, problem.R, np.zeros(n), Qf=problem.Qf, q=-gx, qu=-gu)
    y = lqr_solve(A, B, adj)
    # KKT rows ordered (stationarity in x, stationarity in u, dynamics);
    # the adjoint solves H dz + J' dl = g, J dz = 0, so its multipliers pair with r_h
    tape = Tape()
    tA, tB, tx0 = tape.variable(A), tape.variable(B), tape.variable(problem.x0)
    tQ, tR, tQf, tr = tape.variable(Qs), tape.variable(Rs), tape.variable(problem.Qf), tape.variable(problem.reference)
    r_x, r_u, r_h = kkt_residual(tA, tB, tx0, tQ, tR, tQf, tr, problem, sol)
    inner = (
        ad.tsum(r_x * ad.constant(y.states))
        + ad.tsum(r_u * ad.constant(y.controls))
        + ad.tsum(r_h * ad.constant(y.costates))
    )
    grads = gradient(-1.0 * inner, [tA, tB, tx0, tQ, tR, tQf, tr])
    return LqrGradients(*(g.numpy() for g in grads))
