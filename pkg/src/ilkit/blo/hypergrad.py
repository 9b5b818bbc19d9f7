"""Hypergradient routes: unrolled, implicit, first-order and constrained."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .. import ad
from ..ad import Tape, Tensor, gradient
from .linsolve import SolveResult, linear_solve
from .lower import BilevelProblem, _flat, lower_grad_norm, unroll

METHOD_KINDS = ("unrolled", "implicit", "first-order-approx", "constrained-implicit")


@dataclass
class HypergradMethod:
    kind: str = "implicit"
    linear_solver: str = "conjugate-gradient"
    max_iter: int = 1000
    tol: float = 1e-10
    damping: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown hypergradient method {self.kind!r}")
        if self.linear_solver not in ("conjugate-gradient", "gradient-descent"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if not self.tol > 0:
            raise ValueError("residual tolerance must be > 0")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")


@dataclass
class Hypergrad:
    grad: np.ndarray
    solves: list = field(default_factory=list)
    error_estimate: Optional[float] = None
    lam: Optional[float] = None
    route: str = ""

    @property
    def flagged(self) -> bool:
        return any(s.flagged for s in self.solves)

    @property
    def residual(self) -> float:
        return max((s.residual for s in self.solves), default=0.0)

    @property
    def cg_iterations(self) -> int:
        return sum(s.iterations for s in self.solves)


class _Curvature:
    """Second-order products of a cost at a fixed (psi, phi).

    The gradient with respect to phi is recorded once; Hessian and mixed
    products are then plain backward passes over that recorded graph.
    """

    def __init__(self, cost, psi: np.ndarray, phi: np.ndarray) -> None:
        self.tape = Tape()
        self.psi = self.tape.variable(psi)
        self.phi = self.tape.variable(phi)
        self.value = cost(self.psi, self.phi)
        self.g_phi, self.g_psi = gradient(self.value, [self.phi, self.psi], record=True)

    def hess(self, d: np.ndarray) -> np.ndarray:
        return gradient(ad.tsum(self.g_phi * ad.constant(d)), [self.phi])[0].numpy()

    def mixed(self, d: np.ndarray) -> np.ndarray:
        """(d^2 cost / dphi dpsi)^T d, a vector in psi space."""
        return gradient(ad.tsum(self.g_phi * ad.constant(d)), [self.psi])[0].numpy()

    def mixed_matrix(self) -> np.ndarray:
        """Rows i: d/dpsi of dcost/dphi_i, shape (n_phi, n_psi)."""
        return np.array([gradient(self.g_phi[i], [self.psi])[0].numpy() for i in range(self.phi.size)])


def _upper_partials(problem: BilevelProblem, psi: np.ndarray, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tape = Tape()
    ps, ph = tape.variable(psi), tape.variable(phi)
    g_psi, g_phi = gradient(problem.upper(ps, ph), [ps, ph])
    return g_psi.numpy(), g_phi.numpy()


def hypergrad_unrolled(problem: BilevelProblem, psi: Any) -> Hypergrad:
    """Differentiate U(psi, Phi_T(psi)) through every lower-level step."""
    if problem.ll_solver.kind == "levenberg-marquardt":
        raise ValueError("unrolled route needs a differentiable solver; levenberg-marquardt accepts/rejects steps")
    psi = _flat(psi)
    tape = Tape()
    ps = tape.variable(psi)
    phi, _, _, _, _ = unroll(problem, ps, tape, record=True)
    (g,) = gradient(problem.upper(ps, phi), [ps])
    return Hypergrad(g.numpy(), route="unrolled")


def hypergrad_implicit(
    problem: BilevelProblem,
    psi: Any,
    phi_star: Any,
    method: Optional[HypergradMethod] = None,
    check_converged: bool = True,
) -> Hypergrad:
    """grad = dU/dpsi - q^T d2L/dphi dpsi with H q = dU/dphi solved matrix-free."""
    method = method or HypergradMethod()
    psi, phi = _flat(psi), _flat(phi_star)
    if check_converged:
        gn = lower_grad_norm(problem, psi, phi)
        if not gn <= problem.ll_solver.tol:
            raise ValueError(f"implicit route needs a stationary lower level: ||dL/dphi|| = {gn:.3e} > {problem.ll_solver.tol:.1e}")
    u_psi, u_phi = _upper_partials(problem, psi, phi)
    curv = _Curvature(problem.lower, psi, phi)
    sol = linear_solve(method.linear_solver, curv.hess, u_phi, method.tol, method.max_iter, method.damping)
    grad = u_psi - curv.mixed(sol.x)
    return Hypergrad(grad, [sol], route="implicit")


def dphi_dpsi(problem: BilevelProblem, psi: Any, phi_star: Any, method: Optional[HypergradMethod] = None) -> tuple[np.ndarray, list]:
    """Implicit Jacobian -H^{-1} d2L/dphi dpsi, one solve per psi column."""
    method = method or HypergradMethod()
    curv = _Curvature(problem.lower, _flat(psi), _flat(phi_star))
    M = curv.mixed_matrix()
    cols, solves = [], []
    for j in range(M.shape[1]):
        s = linear_solve(method.linear_solver, curv.hess, M[:, j], method.tol, method.max_iter, method.damping)
        cols.append(-s.x)
        solves.append(s)
    return np.array(cols).T.reshape(M.shape), solves


def hypergrad_first_order(
    problem: BilevelProblem,
    psi: Any,
    phi_T: Any,
    method: Optional[HypergradMethod] = None,
    with_error: bool = True,
) -> Hypergrad:
    """dU/dpsi with phi_T held fixed, plus ||dU/dphi|| ||dphi*/dpsi|| when phi_T is stationary."""
    psi, phi = _flat(psi), _flat(phi_T)
    u_psi, u_phi = _upper_partials(problem, psi, phi)
    err = None
    solves: list = []
    if with_error and lower_grad_norm(problem, psi, phi) <= problem.ll_solver.tol:
        J, solves = dphi_dpsi(problem, psi, phi, method)
        err = float(np.linalg.norm(u_phi) * np.linalg.norm(J, 2)) if J.size else 0.0
    return Hypergrad(u_psi, solves, error_estimate=err, route="first-order-approx")


def _constraint_parts(problem: BilevelProblem, psi: np.ndarray, phi: np.ndarray):
    tape = Tape()
    ps, ph = tape.variable(psi), tape.variable(phi)
    xi = problem.constraint(ps, ph)
    if xi.size != 1:
        raise ValueError(f"constraint must be scalar, got shape {xi.shape}")
    a, c = gradient(xi, [ph, ps])
    return xi.item(), a.numpy(), c.numpy()


def hypergrad_constrained(
    problem: BilevelProblem,
    psi: Any,
    phi_star: Any,
    kind: Optional[str] = None,
    method: Optional[HypergradMethod] = None,
    feas_tol: float = 1e-8,
    lambda_tol: float = 1e-12,
) -> Hypergrad:
    """Hypergradient through a lower level with one scalar constraint xi(psi, phi) (= or <=) 0.

    With the Lagrangian L - lambda xi and H its phi-Hessian at fixed lambda,
    a = dxi/dphi, c = dxi/dpsi, B = d2(L - lambda xi)/dphi dpsi:

        w = H^-1 dU/dphi,  z = H^-1 a,  s = a^T z
        grad = dU/dpsi + (a^T w / s) (B^T z - c) - B^T w

    which is the upper gradient chained with
    dphi*/dpsi = z (z^T B - c^T) / s - H^-1 B.
    """
    method = method or HypergradMethod(kind="constrained-implicit")
    kind = kind or problem.constraint_kind
    if problem.constraint is None:
        raise ValueError("problem has no constraint")
    if kind not in ("equality", "inequality"):
        raise ValueError(f"constraint kind must be equality or inequality, got {kind!r}")
    psi, phi = _flat(psi), _flat(phi_star)
    xi, a, c = _constraint_parts(problem, psi, phi)

    if kind == "equality" and abs(xi) > feas_tol:
        raise ValueError(f"equality constraint violated at phi*: xi = {xi:.3e}")
    if kind == "inequality" and xi > feas_tol:
        raise ValueError(f"inequality constraint violated at phi*: xi = {xi:.3e}")

    tape = Tape()
    ph = tape.variable(phi)
    (l_phi,) = gradient(problem.lower(ad.constant(psi), ph), [ph])
    l_phi = l_phi.numpy()
    aa = float(a @ a)
    lam = float(l_phi @ a) / aa if aa > 0 else 0.0
    inactive = kind == "inequality" and (xi < -feas_tol or abs(lam) <= lambda_tol)
    if inactive:
        out = hypergrad_implicit(problem, psi, phi, HypergradMethod("implicit", method.linear_solver, method.max_iter, method.tol, method.damping))
        out.lam, out.route = 0.0, "constrained-inactive"
        return out
    if aa == 0.0:
        raise ValueError("constraint gradient dxi/dphi vanishes at phi*; multiplier undefined")
    stat = float(np.linalg.norm(l_phi - lam * a))
    if stat > 1e-6 * (1.0 + float(np.linalg.norm(l_phi))):
        raise ValueError(f"phi* is not a KKT point: ||dL/dphi - lambda dxi/dphi|| = {stat:.3e}")

    lag = lambda ps, ph: problem.lower(ps, ph) - lam * problem.constraint(ps, ph)
    curv = _Curvature(lag, psi, phi)
    u_psi, u_phi = _upper_partials(problem, psi, phi)
    sw = linear_solve(method.linear_solver, curv.hess, u_phi, method.tol, method.max_iter, method.damping)
    sz = linear_solve(method.linear_solver, curv.hess, a, method.tol, method.max_iter, method.damping)
    w, z = sw.x, sz.x
    s = float(a @ z)
    scale = float(np.linalg.norm(a) * np.linalg.norm(z))
    if scale == 0.0 or abs(s) <= 1e-12 * scale:
        cond = np.inf if s == 0.0 else scale / abs(s)
        raise ValueError(f"singular reduced system a^T H^-1 a = {s:.3e} (condition ~ {cond:.3e})")
    grad = u_psi + (float(a @ w) / s) * (curv.mixed(z) - c) - curv.mixed(w)
    return Hypergrad(grad, [sw, sz], lam=lam, route="constrained")


def constrained_jacobian(problem: BilevelProblem, psi: Any, phi_star: Any, method: Optional[HypergradMethod] = None) -> np.ndarray:
    """dphi*/dpsi for an active scalar constraint, as an (n_phi, n_psi) matrix."""
    method = method or HypergradMethod(kind="constrained-implicit")
    psi, phi = _flat(psi), _flat(phi_star)
    _, a, c = _constraint_parts(problem, psi, phi)
    tape = Tape()
    ph = tape.variable(phi)
    (l_phi,) = gradient(problem.lower(ad.constant(psi), ph), [ph])
    lam = float(l_phi.numpy() @ a) / float(a @ a)
    lag = lambda ps, ph: problem.lower(ps, ph) - lam * problem.constraint(ps, ph)
    curv = _Curvature(lag, psi, phi)
    B = curv.mixed_matrix()
    z = linear_solve(method.linear_solver, curv.hess, a, method.tol, method.max_iter, method.damping).x
    HB = np.array([linear_solve(method.linear_solver, curv.hess, B[:, j], method.tol, method.max_iter, method.damping).x for j in range(B.shape[1])]).T
    s = float(a @ z)
    return np.outer(z, z @ B - c) / s - HB.reshape(B.shape)


def hypergrad(problem: BilevelProblem, psi: Any, method: HypergradMethod, phi: Optional[np.ndarray] = None) -> Hypergrad:
    """Dispatch on ``method.kind``; solves the lower level when ``phi`` is not given."""
    from .lower import solve_lower

    if method.kind == "unrolled":
        return hypergrad_unrolled(problem, psi)
    if phi is None:
        phi = solve_lower(problem, psi).phi
    if method.kind == "implicit":
        return hypergrad_implicit(problem, psi, phi, method)
    if method.kind == "first-order-approx":
        return hypergrad_first_order(problem, psi, phi, method, with_error=False)
    return hypergrad_constrained(problem, psi, phi, method=method)
