"""Gradient-variance tracking across mini-batches."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

LOG_FLOOR = 1e-30


@dataclass
class VarianceReport:
    iteration: int
    variance: np.ndarray
    mean_log_variance: float


@dataclass
class VarianceTracker:
    """Running E[g] and E[g^2] per gradient component within one iteration."""

    iteration: int = 0
    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_sq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    series: list = field(default_factory=list)

    def update(self, g: np.ndarray) -> None:
        g = np.asarray(g, dtype=np.float64).reshape(-1)
        if self.count == 0:
            self.mean = np.zeros_like(g)
            self.mean_sq = np.zeros_like(g)
        elif g.shape != self.mean.shape:
            raise ValueError(f"gradient size changed from {self.mean.size} to {g.size}")
        self.count += 1
        w = 1.0 / self.count
        self.mean = self.mean + w * (g - self.mean)
        self.mean_sq = self.mean_sq + w * (g * g - self.mean_sq)

    def variance(self) -> np.ndarray:
        # clamp the round-off that can push E[g^2] - E[g]^2 slightly negative
        return np.maximum(self.mean_sq - self.mean * self.mean, 0.0)

    def close_iteration(self) -> VarianceReport:
        var = self.variance()
        mlv = float(np.mean(np.log(np.maximum(var, LOG_FLOOR)))) if var.size else float("nan")
        rep = VarianceReport(self.iteration, var, mlv)
        self.series.append((self.iteration, mlv))
        self.iteration += 1
        self.count = 0
        return rep


def track_variance(tracker: VarianceTracker, batches: Iterable[np.ndarray]) -> VarianceReport:
    """Fold one iteration's mini-batch gradients into ``tracker``."""
    batches = list(batches)
    if len(batches) < 2:
        raise ValueError(f"variance needs at least 2 mini-batches, got {len(batches)}")
    tracker.count = 0
    for g in batches:
        tracker.update(g)
    return tracker.close_iteration()


def write_variance_csv(path: Union[str, Path], series: Iterable[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mean_log_variance"])
        for it, v in series:
            w.writerow([it, format(v, ".17g")])
