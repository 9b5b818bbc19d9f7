"""Linearised attitude plant with an inertia-like parameter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ad


@dataclass
class LinearPlant:
    """m decoupled (angle, rate) axes, n = 2m states.

    x+ = A x + B(p) (u + eta_u) + w, measurement = x+ + v.  The control
    enters each rate as dt / p, so p plays the role of a moment of inertia.
    """

    p: float
    n: int = 2
    m: int = 1
    dt: float = 0.05
    sigma_u: float = 1e-4
    sigma_x: float = 8.73e-2
    sigma_w: float = 0.0

    def __post_init__(self) -> None:
        if not self.p > 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if self.n != 2 * self.m:
            raise ValueError(f"n must be 2m (angle and rate per axis), got n={self.n}, m={self.m}")
        if min(self.sigma_u, self.sigma_x, self.sigma_w) < 0 or not self.dt > 0:
            raise ValueError("noise stds must be >= 0 and dt > 0")

    @property
    def A(self) -> np.ndarray:
        return plant_A(self.m, self.dt)

    @property
    def B(self) -> np.ndarray:
        return plant_B(self.m, self.dt, self.p)

    def with_p(self, p: float) -> "LinearPlant":
        return LinearPlant(p, self.n, self.m, self.dt, self.sigma_u, self.sigma_x, self.sigma_w)


def plant_A(m: int, dt: float) -> np.ndarray:
    A = np.eye(2 * m)
    for i in range(m):
        A[2 * i, 2 * i + 1] = dt
    return A


def plant_B(m: int, dt: float, p) -> np.ndarray:
    """B(p); ``p`` may be a float or a tape tensor (then the result is a tensor)."""
    S = np.zeros((2 * m, m))
    for i in range(m):
        S[2 * i + 1, i] = dt
    if isinstance(p, (int, float, np.floating)):
        return S / float(p)
    return ad.constant(S) * (1.0 / p)


def simulate_step(plant: LinearPlant, state: np.ndarray, control: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(next state, noisy measurement).  Noise is drawn in a fixed order: eta_u, w, v."""
    u = np.asarray(control, dtype=np.float64).reshape(plant.m)
    eta = rng.normal(0.0, plant.sigma_u, plant.m) if plant.sigma_u > 0 else np.zeros(plant.m)
    w = rng.normal(0.0, plant.sigma_w, plant.n) if plant.sigma_w > 0 else np.zeros(plant.n)
    v = rng.normal(0.0, plant.sigma_x, plant.n) if plant.sigma_x > 0 else np.zeros(plant.n)
    nxt = plant.A @ state + plant.B @ (u + eta) + w
    return nxt, nxt + v
