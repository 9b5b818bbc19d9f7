"""Dense layers built from tape operations."""

from __future__ import annotations

from typing import Callable, Mapping

from .tensor import Tensor, add, matmul, relu, tanh

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {"tanh": tanh, "relu": relu}


def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, W), b)


def mlp(params: Mapping[str, Tensor], prefix: str, x: Tensor, n_layers: int, act: str = "tanh") -> Tensor:
    """Apply ``n_layers`` dense layers; the activation is skipped after the last."""
    f = ACTIVATIONS[act]
    h = x
    for i in range(n_layers):
        h = dense(h, params[f"{prefix}.W{i}"], params[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            h = f(h)
    return h
