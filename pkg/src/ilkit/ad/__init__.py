"""Reverse-mode differentiation on dense float64 tensors."""

from . import nn
from .grad import grad_fn, gradient, hessian, hvp, jacobian
from .nn import dense, mlp
from .params import (
    SGD,
    Adam,
    Parameter,
    ParameterStore,
    dumps_weights,
    glorot,
    init_mlp,
    load_weights,
    loads_weights,
    make_optimizer,
    save_weights,
)
from .tensor import (
    NEIGHBOR_KERNEL,
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    add,
    aggregate3x3_array,
    as_tensor,
    atan2,
    broadcast_to,
    concat,
    constant,
    cos,
    div,
    exp,
    getitem,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    neighborhood_aggregate,
    outer,
    power,
    relu,
    reshape,
    scatter_add,
    sigmoid,
    sin,
    softmax,
    softplus,
    solve,
    sqrt,
    square,
    stack,
    stop_gradient,
    sub,
    tabs,
    tanh,
    tmax,
    transpose,
    tsum,
    where,
)

__all__ = [name for name in dir() if not name.startswith("_")]
