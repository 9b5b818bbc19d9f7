"""Reverse-mode gradients, Hessian-vector products and small dense helpers."""

from __future__ import annotations

import contextlib
from typing import Any, Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tape, Tensor, as_tensor, constant, mul, tsum


def gradient(output: Tensor, wrt: Sequence[Tensor], record: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``output`` with respect to each tensor in ``wrt``.

    With ``record=True`` the backward computation is appended to the tape, so
    the returned tensors are themselves differentiable.  A tensor that the
    output does not depend on gets a zero gradient.
    """
    if output.size != 1:
        raise ShapeError(f"gradient: output must be scalar, got shape {output.shape}")
    wrt = list(wrt)
    tape = output.tape
    grads: dict[int, Tensor] = {}
    wanted = {w.node for w in wrt if w.node is not None and w.tape is tape}
    if output.node is not None and wanted:
        lo = min(wanted)
        adj: dict[int, Tensor] = {output.node: constant(np.ones(output.shape))}
        ctx = contextlib.nullcontext() if record else tape.paused()
        with ctx:
            for i in range(output.node, lo - 1, -1):
                g = adj.pop(i, None)
                if g is None:
                    continue
                if i in wanted:
                    grads[i] = g
                node = tape.nodes[i]
                if node.backward is None:
                    continue
                in_grads = node.backward(g, Tensor(node.value, tape, i))
                for inp, ig in zip(node.input_tensors, in_grads):
                    if ig is None or inp.node is None or inp.node < lo:
                        continue
                    prev = adj.get(inp.node)
                    adj[inp.node] = ig if prev is None else prev + ig
    out = []
    for w in wrt:
        g = grads.get(w.node) if w.node is not None and w.tape is tape else None
        out.append(g if g is not None else constant(np.zeros(w.shape)))
    return out


def grad_fn(f: Callable[[Tensor], Tensor]) -> Callable[[Any], np.ndarray]:
    """Turn a scalar tensor function into ``x -> df/dx`` on arrays."""

    def g(x: Any) -> np.ndarray:
        tape = Tape()
        xv = tape.variable(x)
        (gx,) = gradient(f(xv), [xv])
        return gx.numpy()

    return g


def hvp(f: Callable[[Tensor], Tensor], x: Any, v: Any) -> np.ndarray:
    """Hessian of ``f`` at ``x`` applied to ``v`` without forming the Hessian.

    Computed as the gradient of the inner product between the recorded
    gradient and ``v``.
    """
    x = np.asarray(as_tensor(x).data, dtype=np.float64)
    v = np.asarray(as_tensor(v).data, dtype=np.float64)
    if x.shape != v.shape:
        raise ShapeError(f"hvp: x shape {x.shape} differs from v shape {v.shape}")
    tape = Tape()
    xv = tape.variable(x)
    (gx,) = gradient(f(xv), [xv], record=True)
    (hv,) = gradient(tsum(mul(gx, constant(v))), [xv])
    return hv.numpy()


def hessian(f: Callable[[Tensor], Tensor], x: Any) -> np.ndarray:
    """Explicit Hessian of a scalar function of a flat vector, row by row.

    Each row is the gradient of one component of the recorded gradient.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    tape = Tape()
    xv = tape.variable(x)
    (gx,) = gradient(f(xv), [xv], record=True)
    rows = [gradient(gx[i], [xv])[0].numpy() for i in range(x.size)]
    return np.array(rows)


def jacobian(f: Callable[[Tensor], Tensor], x: Any) -> np.ndarray:
    """Dense Jacobian of a vector function by one reverse pass per output."""
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xv = tape.variable(x)
    y = f(xv)
    flat = y.reshape(y.size)
    return np.array([gradient(flat[i], [xv])[0].numpy().reshape(-1) for i in range(y.size)])
