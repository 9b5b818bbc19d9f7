"""Settling time, tracking RMSE and steady-state error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ControlMetrics:
    st: float
    rmse: float
    sse: float
    settled: bool


def control_metrics(trajectory, reference, band: float, dt: float = 1.0, tail: float = 0.1) -> ControlMetrics:
    """ST, RMSE and SSE of a scalar trajectory against a reference.

    The steady value is the mean tracking error over the final ``tail``
    fraction of samples (at least one).  ST is the first time after which the
    trajectory stays within ``band`` of reference + steady error; SSE is the
    absolute steady error.  A trajectory whose last sample is outside the band
    never settled: ST is the full duration and ``settled`` is False.
    """
    x = np.asarray(trajectory, dtype=np.float64).reshape(-1)
    r = np.broadcast_to(np.asarray(reference, dtype=np.float64), x.shape)
    if x.size < 2:
        raise ValueError("trajectory needs at least 2 samples")
    if not band > 0:
        raise ValueError("band must be positive")
    e = x - r
    k = max(1, int(round(tail * x.size)))
    steady = float(e[-k:].mean())
    outside = np.abs(e - steady) > band
    rmse = float(np.sqrt(np.mean(e * e)))
    if outside[-1]:
        return ControlMetrics((x.size - 1) * dt, rmse, abs(steady), False)
    idx = np.flatnonzero(outside)
    st = 0.0 if idx.size == 0 else float((idx[-1] + 1) * dt)
    return ControlMetrics(st, rmse, abs(steady), True)
