"""SE(2) algebra on (x, y, theta) rows, written with tape operations.

Every function accepts arrays or tensors of shape (..., 3) with the pose in
the last axis and returns a tensor; call ``.numpy()`` for plain values.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .. import ad
from ..ad import Tensor

_SERIES = 1e-3  # |theta| below which the log map uses its Taylor series


def _cols(p: Any) -> tuple[Tensor, Tensor, Tensor]:
    p = ad.as_tensor(p)
    return p[..., 0], p[..., 1], p[..., 2]


def wrap(theta: Any) -> Tensor:
    """Angle wrapped to (-pi, pi]."""
    t = ad.as_tensor(theta)
    return ad.atan2(ad.sin(t), ad.cos(t))


def compose(a: Any, b: Any) -> Tensor:
    """a * b."""
    xa, ya, ta = _cols(a)
    xb, yb, tb = _cols(b)
    c, s = ad.cos(ta), ad.sin(ta)
    return ad.stack([xa + c * xb - s * yb, ya + s * xb + c * yb, wrap(ta + tb)], axis=-1)


def inverse(a: Any) -> Tensor:
    x, y, t = _cols(a)
    c, s = ad.cos(t), ad.sin(t)
    return ad.stack([-(c * x + s * y), s * x - c * y, -t], axis=-1)


def between(a: Any, b: Any) -> Tensor:
    """a^-1 * b, with the angle wrapped."""
    xa, ya, ta = _cols(a)
    xb, yb, tb = _cols(b)
    c, s = ad.cos(ta), ad.sin(ta)
    dx, dy = xb - xa, yb - ya
    return ad.stack([c * dx + s * dy, -s * dx + c * dy, wrap(tb - ta)], axis=-1)


def _half_cot(theta: Tensor) -> Tensor:
    """(theta/2) cot(theta/2), with a series branch near zero."""
    small = np.abs(theta.data) < _SERIES
    t2 = theta * theta
    series = 1.0 - t2 * (1.0 / 12.0) - t2 * t2 * (1.0 / 720.0)
    safe = ad.where(small, ad.constant(np.ones(theta.shape)), theta)
    half = safe * 0.5
    exact = half * ad.cos(half) / ad.sin(half)
    return ad.where(small, series, exact)


def log(a: Any) -> Tensor:
    """vee(log(a)): (V(theta)^-1 t, theta) with theta wrapped."""
    x, y, t = _cols(a)
    t = wrap(t)
    alpha = _half_cot(t)
    beta = t * 0.5
    return ad.stack([alpha * x + beta * y, -beta * x + alpha * y, t], axis=-1)


def exp(v: Any) -> Tensor:
    """Inverse of ``log`` for |theta| < pi."""
    vx, vy, t = _cols(v)
    small = np.abs(t.data) < _SERIES
    t2 = t * t
    safe = ad.where(small, ad.constant(np.ones(t.shape)), t)
    A = ad.where(small, 1.0 - t2 * (1.0 / 6.0), ad.sin(safe) / safe)
    B = ad.where(small, t * 0.5 - t2 * t * (1.0 / 24.0), (1.0 - ad.cos(safe)) / safe)
    return ad.stack([A * vx - B * vy, B * vx + A * vy, wrap(t)], axis=-1)


def relative_residual(pi: Any, pj: Any, z: Any) -> Tensor:
    """vee(log(Z^-1 (P_i^-1 P_j))); zero iff the measurement is consistent."""
    return log(between(z, between(pi, pj)))
