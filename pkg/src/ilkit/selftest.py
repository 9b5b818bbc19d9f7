"""Analytic-oracle checks for the hypergradient routes, HVPs and the control-variate estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ad
from .blo import hypergrad_constrained, hypergrad_implicit, hypergrad_unrolled, solve_lower
from .blo.fixtures import central_difference, random_constrained, random_quadratic
from .discrete import CategoricalToy, expectation, load_cost
from .rng import make_rng


@dataclass
class CheckResult:
    name: str
    cases: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def _dims(rng: np.random.Generator, lo: int, hi: int) -> tuple[int, int]:
    n, m = rng.integers(lo, hi + 1, 2)
    return int(n), int(m)


def check_implicit(seed: int, cases: int = 50) -> CheckResult:
    """Implicit route vs the closed-form hypergradient of a quadratic bilevel problem."""
    errs = []
    for k in range(cases):
        rng = make_rng(seed, 1, k)
        fx = random_quadratic(rng, *_dims(rng, 2, 8))
        p = fx.problem(fx.gd_config(tol=1e-10))
        sol = solve_lower(p, fx.psi)
        errs.append(_rel(hypergrad_implicit(p, fx.psi, sol.phi).grad, fx.analytic_grad(fx.psi)))
    return CheckResult("implicit_vs_analytic", cases, max(errs), 1e-6)


def check_unrolled(seed: int, cases: int = 50) -> CheckResult:
    """Unrolled gradient descent, run until the lower gradient norm is <= 1e-8."""
    errs = []
    for k in range(cases):
        rng = make_rng(seed, 2, k)
        fx = random_quadratic(rng, *_dims(rng, 2, 8))
        p = fx.problem(fx.gd_config(tol=1e-8))
        sol = solve_lower(p, fx.psi)
        if not sol.grad_norm <= 1e-8:
            raise RuntimeError(f"case {k}: lower level stopped at ||dL/dphi|| = {sol.grad_norm:.2e}")
        p.ll_solver.steps = sol.steps
        errs.append(_rel(hypergrad_unrolled(p, fx.psi).grad, fx.analytic_grad(fx.psi)))
    return CheckResult("unrolled_vs_analytic", cases, max(errs), 1e-5)


def check_constrained(seed: int, cases: int = 50) -> CheckResult:
    """Equality-constrained route vs central differences of the KKT solution."""
    errs = []
    for k in range(cases):
        rng = make_rng(seed, 3, k)
        fx = random_constrained(rng, *_dims(rng, 2, 8))
        phi, _ = fx.kkt(fx.psi)
        g = hypergrad_constrained(fx.problem(), fx.psi, phi).grad
        errs.append(_rel(g, central_difference(fx.value, fx.psi)))
    return CheckResult("constrained_vs_finite_difference", cases, max(errs), 1e-4)


def smooth_function(rng: np.random.Generator, n: int) -> tuple[Callable, Callable]:
    """f(x) = 0.5 x^T A x + sum_k c_k sin(b_k . x) + d . x^3 and its closed-form Hessian."""
    A = rng.normal(size=(n, n))
    A = A + A.T
    B = rng.normal(size=(3, n))
    c = rng.normal(size=3)
    d = rng.normal(size=n)

    def f(x):
        quad = 0.5 * ad.tsum(x * ad.matmul(ad.constant(A), x))
        waves = ad.tsum(ad.constant(c) * ad.sin(ad.matmul(ad.constant(B), x)))
        return quad + waves + ad.tsum(ad.constant(d) * x * x * x)

    def hess(x):
        s = np.sin(B @ x)
        return A - (B.T * (c * s)) @ B + np.diag(6 * d * x)

    return f, hess


def check_hvp(seed: int, cases: int = 20) -> CheckResult:
    """Hessian-vector products vs the closed-form Hessian, max absolute component error."""
    errs = []
    for k in range(cases):
        rng = make_rng(seed, 4, k)
        n = int(rng.integers(1, 11))
        f, hess = smooth_function(rng, n)
        x, v = rng.uniform(-1, 1, (2, n))
        errs.append(float(np.abs(ad.hvp(f, x, v) - hess(x) @ v).max()))
    return CheckResult("hvp_vs_hessian", cases, max(errs), 1e-8)


def check_enumeration(seed: int, cases: int = 20) -> CheckResult:
    """Expected control-variate and score estimates over all outcomes vs the exact gradient."""
    shapes = [(1, 2), (1, 5), (2, 3), (3, 4), (2, 8), (6, 2)]
    errs = []
    for k in range(cases):
        rng = make_rng(seed, 5, k)
        shape = shapes[k % len(shapes)]
        toy = CategoricalToy(rng.normal(size=shape), load_cost(rng, *shape), W=rng.normal(size=shape))
        batch, probs = toy.enumeration_batch()
        exact = toy.exact_grad()
        for per in (batch.per_sample_score(), batch.per_sample_control_variate()):
            errs.append(float(np.abs(expectation(per, probs) - exact).max()))
    return CheckResult("estimator_enumeration", cases, max(errs), 1e-10)


def variance_ratio(seed: int, shape: tuple, samples: int = 10_000) -> tuple[float, float]:
    """(surrogate correlation, variance of control-variate / score estimates) on a fitted toy."""
    rng = make_rng(seed, 6, *shape)
    toy = CategoricalToy(rng.normal(size=shape), load_cost(rng, *shape))
    rho = toy.fit_surrogate(rng)
    batch = toy.batch(toy.sample(rng, samples))
    vs = batch.per_sample_score().reshape(samples, -1).var(axis=0).sum()
    vc = batch.per_sample_control_variate().reshape(samples, -1).var(axis=0).sum()
    return rho, float(vc / vs)


def run_selftest(seed: int = 0, cases: int = 50) -> list[CheckResult]:
    return [
        check_implicit(seed, cases),
        check_unrolled(seed, cases),
        check_constrained(seed, cases),
        check_hvp(seed, min(cases, 20)),
        check_enumeration(seed, min(cases, 20)),
    ]
