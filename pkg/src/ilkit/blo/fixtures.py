"""Random quadratic bilevel problems with analytic hypergradients.

Used by the self-test command and the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import ad
from .lower import BilevelProblem, LLSolverConfig


def _spd(rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 5.0) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


@dataclass
class QuadraticFixture:
    """L = 0.5 phi^T A phi - phi^T (C psi + d)
    U = 0.5 ||phi - t||^2 + psi^T E phi + 0.5 psi^T G psi
    """

    A: np.ndarray
    C: np.ndarray
    d: np.ndarray
    t: np.ndarray
    E: np.ndarray
    G: np.ndarray
    psi: np.ndarray

    def phi_star(self, psi: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.A, self.C @ psi + self.d)

    def value(self, psi: np.ndarray) -> float:
        phi = self.phi_star(psi)
        r = phi - self.t
        return 0.5 * r @ r + psi @ self.E @ phi + 0.5 * psi @ self.G @ psi

    def analytic_grad(self, psi: np.ndarray) -> np.ndarray:
        phi = self.phi_star(psi)
        u_phi = phi - self.t + self.E.T @ psi
        u_psi = self.E @ phi + self.G @ psi
        return u_psi + np.linalg.solve(self.A, self.C).T @ u_phi

    def problem(self, ll: LLSolverConfig | None = None) -> BilevelProblem:
        A, C, d, t, E, G = (ad.constant(x) for x in (self.A, self.C, self.d, self.t, self.E, self.G))

        def lower(psi, phi):
            return 0.5 * ad.tsum(phi * (A @ phi)) - ad.tsum(phi * (C @ psi + d))

        def upper(psi, phi):
            r = phi - t
            return 0.5 * ad.tsum(r * r) + ad.tsum(psi * (E @ phi)) + 0.5 * ad.tsum(psi * (G @ psi))

        def closed(psi):
            return ad.solve(A, C @ psi + d)

        n = self.A.shape[0]
        return BilevelProblem(upper, lower, lambda psi: np.zeros(n), ll or LLSolverConfig(), closed_form=closed)

    def gd_config(self, tol: float = 1e-10, max_steps: int = 20000) -> LLSolverConfig:
        """Gradient descent with step 1/lambda_max, run to gradient norm ``tol``."""
        ev = np.linalg.eigvalsh(self.A)
        return LLSolverConfig("gradient-descent", max_steps, 1.0 / ev[-1], tol)


def random_quadratic(rng: np.random.Generator, n_phi: int, n_psi: int) -> QuadraticFixture:
    return QuadraticFixture(
        A=_spd(rng, n_phi),
        C=rng.normal(size=(n_phi, n_psi)),
        d=rng.normal(size=n_phi),
        t=rng.normal(size=n_phi),
        E=0.3 * rng.normal(size=(n_psi, n_phi)),
        G=_spd(rng, n_psi, 0.1, 1.0),
        psi=rng.normal(size=n_psi),
    )


@dataclass
class ConstrainedFixture:
    """min_phi 0.5 phi^T A phi - phi^T (C psi + d)
    s.t. xi = (a + E psi)^T phi - e^T psi - f = 0
    U = 0.5 ||phi - t||^2 + 0.5 ||psi||^2
    """

    A: np.ndarray
    C: np.ndarray
    d: np.ndarray
    a: np.ndarray
    E: np.ndarray
    e: np.ndarray
    f: float
    t: np.ndarray
    psi: np.ndarray

    def kkt(self, psi: np.ndarray) -> tuple[np.ndarray, float]:
        n = self.A.shape[0]
        g = self.a + self.E @ psi
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = self.A
        K[:n, n] = -g
        K[n, :n] = g
        rhs = np.concatenate([self.C @ psi + self.d, [self.e @ psi + self.f]])
        sol = np.linalg.solve(K, rhs)
        return sol[:n], float(sol[n])

    def value(self, psi: np.ndarray) -> float:
        phi, _ = self.kkt(psi)
        r = phi - self.t
        return 0.5 * r @ r + 0.5 * psi @ psi

    def problem(self) -> BilevelProblem:
        A, C, d, a, E, e, t = (ad.constant(x) for x in (self.A, self.C, self.d, self.a, self.E, self.e, self.t))

        def lower(psi, phi):
            return 0.5 * ad.tsum(phi * (A @ phi)) - ad.tsum(phi * (C @ psi + d))

        def constraint(psi, phi):
            return ad.tsum((a + E @ psi) * phi) - ad.tsum(e * psi) - self.f

        def upper(psi, phi):
            r = phi - t
            return 0.5 * ad.tsum(r * r) + 0.5 * ad.tsum(psi * psi)

        closed = lambda psi: self.kkt(np.asarray(psi.data))[0]
        n = self.A.shape[0]
        return BilevelProblem(
            upper, lower, lambda psi: np.zeros(n), LLSolverConfig("closed-form"),
            constraint=constraint, constraint_kind="equality", closed_form=closed,
        )


def random_constrained(rng: np.random.Generator, n_phi: int, n_psi: int) -> ConstrainedFixture:
    return ConstrainedFixture(
        A=_spd(rng, n_phi),
        C=rng.normal(size=(n_phi, n_psi)),
        d=rng.normal(size=n_phi),
        a=rng.normal(size=n_phi) + 1.0,
        E=0.2 * rng.normal(size=(n_phi, n_psi)),
        e=rng.normal(size=n_psi),
        f=float(rng.normal()),
        t=rng.normal(size=n_phi),
        psi=0.5 * rng.normal(size=n_psi),
    )


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(x.size):
        e = np.zeros_like(g)
        e[i] = eps
        g[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return g
