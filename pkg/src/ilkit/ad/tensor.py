"""Dense float64 tensors recorded on an append-only tape.

Every differentiable operation appends one node to the tape that owns its
tracked inputs.  Backward rules are written with the same tensor operations,
so a backward pass run while the tape is recording produces tensors that can
be differentiated again (this is how Hessian-vector products are formed).

Broadcasting is intentionally narrow: equal shapes, a size-1 operand against
anything, or a row/column vector against a matrix.  Everything else raises
:class:`ShapeError`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class DomainError(ValueError):
    """Raised when an input lies outside an operation's documented domain."""


BackwardFn = Callable[["Tensor", "Tensor"], Sequence[Optional["Tensor"]]]


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    value: np.ndarray
    backward: Optional[BackwardFn]
    input_tensors: tuple["Tensor", ...]


class Tape:
    """Append-only record of operations.

    Node ids are positions in :attr:`nodes`; inputs always precede consumers.
    A tape belongs to one experiment instance at a time.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._paused = 0

    @property
    def recording(self) -> bool:
        return self._paused == 0

    @contextlib.contextmanager
    def paused(self) -> Iterator[None]:
        self._paused += 1
        try:
            yield
        finally:
            self._paused -= 1

    def variable(self, value: Any, name: Optional[str] = None) -> "Tensor":
        """Create a tracked leaf holding a private copy of ``value``."""
        data = np.array(value, dtype=np.float64, copy=True)
        data.flags.writeable = False
        node_id = len(self.nodes)
        self.nodes.append(Node("leaf", (), data, None, ()))
        return Tensor(data, self, node_id, name=name)

    def __len__(self) -> int:
        return len(self.nodes)

    def signature(self) -> list[tuple[str, tuple[int, ...], bytes]]:
        """(op, input ids, value bytes) per node; used to compare tapes."""
        return [(n.op, n.inputs, n.value.tobytes()) for n in self.nodes]


class Tensor:
    __slots__ = ("data", "tape", "node", "name")
    __array_priority__ = 100.0

    def __init__(
        self,
        data: Any,
        tape: Optional[Tape] = None,
        node: Optional[int] = None,
        name: Optional[str] = None,
    ) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.flags.writeable:
            arr = arr.copy() if arr.base is not None or arr is data else arr
            arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node = node
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.node is not None

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.tracked else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators -----------------------------------------------------
    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return div(other, self)

    def __matmul__(self, other: Any) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: Any) -> "Tensor":
        return matmul(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis, keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _not_scalar(t: Tensor) -> float:
    raise ShapeError(f"item: tensor of shape {t.shape} is not a scalar")


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x: Any) -> Tensor:
    """An untracked tensor; never receives gradient."""
    return Tensor(np.array(x, dtype=np.float64))


def _common_tape(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.node is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ValueError("operands are recorded on different tapes")
    return tape


def _make(op: str, value: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    value.flags.writeable = False
    tape = _common_tape(inputs)
    if tape is None or not tape.recording:
        return Tensor(value)
    node_id = len(tape.nodes)
    ids = tuple(t.node if t.node is not None else -1 for t in inputs)
    tape.nodes.append(Node(op, ids, value, backward, tuple(inputs)))
    return Tensor(value, tape, node_id)


# -- broadcasting ---------------------------------------------------------


def _broadcast_shape(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    if a == b:
        return a
    na, nb = int(np.prod(a)), int(np.prod(b))
    if na == 1 and len(a) <= len(b):
        return b
    if nb == 1 and len(b) <= len(a):
        return a
    for m, v in ((a, b), (b, a)):
        if len(m) == 2 and (v in ((1, m[1]), (m[1],), (m[0], 1))):
            return m
    raise ShapeError(f"{op}: cannot broadcast shapes {a} and {b}")


def sum_to(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce ``g`` to ``shape`` (inverse of the allowed broadcasts)."""
    if g.shape == shape:
        return g
    data = g.data
    lead = data.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and data.shape[i + lead] != 1
    )
    value = data.sum(axis=axes, keepdims=False) if axes else data
    value = value.reshape(shape)

    def backward(gg: Tensor, out: Tensor) -> tuple[Tensor]:
        return (broadcast_to(gg, g.shape),)

    return _make("sum_to", value, (g,), backward)


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if x.shape == shape:
        return x
    if x.ndim < len(shape):
        value = np.broadcast_to(x.data.reshape((1,) * (len(shape) - x.ndim) + x.shape), shape)
    else:
        value = np.broadcast_to(x.data, shape)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (sum_to(g, x.shape),)

    return _make("broadcast_to", np.array(value), (x,), backward)


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    return _broadcast_shape(op, a.shape, b.shape)


def _bcast_value(x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if x.ndim < len(shape):
        x = x.reshape((1,) * (len(shape) - x.ndim) + x.shape)
    return x


# -- elementwise binary ---------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes("add", a, b)
    value = _bcast_value(a.data, shape) + _bcast_value(b.data, shape)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        return sum_to(g, a.shape), sum_to(g, b.shape)

    return _make("add", value, (a, b), backward)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes("sub", a, b)
    value = _bcast_value(a.data, shape) - _bcast_value(b.data, shape)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        return sum_to(g, a.shape), neg(sum_to(g, b.shape))

    return _make("sub", value, (a, b), backward)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes("mul", a, b)
    value = _bcast_value(a.data, shape) * _bcast_value(b.data, shape)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)

    return _make("mul", value, (a, b), backward)


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _binary_shapes("div", a, b)
    if np.any(b.data == 0.0):
        raise DomainError("div: denominator contains zero")
    value = _bcast_value(a.data, shape) / _bcast_value(b.data, shape)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        ga = sum_to(div(g, b), a.shape)
        gb = sum_to(neg(mul(g, div(out, b))), b.shape)
        return ga, gb

    return _make("div", value, (a, b), backward)


def atan2(y: Any, x: Any) -> Tensor:
    y, x = as_tensor(y), as_tensor(x)
    if y.shape != x.shape:
        raise ShapeError(f"atan2: shapes {y.shape} and {x.shape} differ")
    r2 = x.data**2 + y.data**2
    if np.any(r2 == 0.0):
        raise DomainError("atan2: undefined at the origin")
    value = np.arctan2(y.data, x.data)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        den = add(mul(x, x), mul(y, y))
        return div(mul(g, x), den), neg(div(mul(g, y), den))

    return _make("atan2", value, (y, x), backward)


def where(mask: Any, a: Any, b: Any) -> Tensor:
    """Elementwise select ``a`` where ``mask`` is true, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=bool)
    shape = _binary_shapes("where", a, b)
    if m.shape != shape:
        raise ShapeError(f"where: mask shape {m.shape} does not match {shape}")
    value = np.where(m, _bcast_value(a.data, shape), _bcast_value(b.data, shape))
    mf = constant(m.astype(np.float64))
    nf = constant((~m).astype(np.float64))

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        return sum_to(mul(g, mf), a.shape), sum_to(mul(g, nf), b.shape)

    return _make("where", value, (a, b), backward)


# -- elementwise unary ----------------------------------------------------


def neg(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (neg(g),)

    return _make("neg", -x.data, (x,), backward)


def exp(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, out),)

    return _make("exp", np.exp(x.data), (x,), backward)


def log(x: Any) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log: argument must be strictly positive")

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (div(g, x),)

    return _make("log", np.log(x.data), (x,), backward)


def sqrt(x: Any) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data < 0.0):
        raise DomainError("sqrt: argument must be nonnegative")

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (div(g, mul(2.0, out)),)

    return _make("sqrt", np.sqrt(x.data), (x,), backward)


def power(x: Any, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)
    if p != int(p) and np.any(x.data < 0.0):
        raise DomainError("power: negative base with non-integer exponent")

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        if p == 0.0:
            return (mul(g, 0.0),)
        return (mul(g, mul(p, power(x, p - 1.0))),)

    return _make("power", np.power(x.data, p), (x,), backward)


def square(x: Any) -> Tensor:
    x = as_tensor(x)
    return mul(x, x)


def tanh(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, sub(1.0, mul(out, out))),)

    return _make("tanh", np.tanh(x.data), (x,), backward)


def sigmoid(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, mul(out, sub(1.0, out))),)

    return _make("sigmoid", expit(x.data), (x,), backward)


def relu(x: Any) -> Tensor:
    x = as_tensor(x)
    mask = constant((x.data > 0.0).astype(np.float64))

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, mask),)

    return _make("relu", np.maximum(x.data, 0.0), (x,), backward)


def softplus(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, sigmoid(x)),)

    return _make("softplus", np.logaddexp(0.0, x.data), (x,), backward)


def sin(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, cos(x)),)

    return _make("sin", np.sin(x.data), (x,), backward)


def cos(x: Any) -> Tensor:
    x = as_tensor(x)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (neg(mul(g, sin(x))),)

    return _make("cos", np.cos(x.data), (x,), backward)


def tabs(x: Any) -> Tensor:
    x = as_tensor(x)
    sign = constant(np.sign(x.data))

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(g, sign),)

    return _make("abs", np.abs(x.data), (x,), backward)


def stop_gradient(x: Any) -> Tensor:
    return constant(as_tensor(x).data)


# -- reductions -----------------------------------------------------------


def _norm_axis(axis: Optional[int], ndim: int) -> Optional[int]:
    if axis is None:
        return None
    if not -ndim <= axis < max(ndim, 1):
        raise ShapeError(f"axis {axis} out of range for ndim {ndim}")
    return axis % ndim


def _expand_reduced(g: Tensor, x_shape: tuple[int, ...], axis: Optional[int], keepdims: bool) -> Tensor:
    if axis is None:
        g = reshape(g, (1,) * len(x_shape)) if len(x_shape) else g
    elif not keepdims:
        shp = list(x_shape)
        shp[axis] = 1
        g = reshape(g, tuple(shp))
    return broadcast_to(g, x_shape)


def tsum(x: Any, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    value = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (_expand_reduced(g, x.shape, axis, keepdims),)

    return _make("sum", value, (x,), backward)


def mean(x: Any, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise ShapeError("mean: empty reduction")
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def tmax(x: Any, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise ShapeError("max: empty tensor")
    axis = _norm_axis(axis, x.ndim)
    value = x.data.max(axis=axis, keepdims=keepdims)
    if axis is None:
        mask = np.zeros(x.size)
        mask[int(np.argmax(x.data))] = 1.0
        mask = mask.reshape(x.shape)
    else:
        idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
        mask = np.zeros(x.shape)
        np.put_along_axis(mask, idx, 1.0, axis=axis)
    maskt = constant(mask)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (mul(_expand_reduced(g, x.shape, axis, keepdims), maskt),)

    return _make("max", value, (x,), backward)


# -- normalisation --------------------------------------------------------


def softmax(x: Any, axis: int = -1, mask: Any = None) -> Tensor:
    """Softmax along ``axis``; entries outside ``mask`` get probability 0."""
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    z = x.data
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape:
            raise ShapeError(f"softmax: mask shape {m.shape} does not match {x.shape}")
        if np.any(~m.any(axis=axis)):
            raise DomainError("softmax: a slice has no unmasked entries")
        z = np.where(m, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    value = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        inner = tsum(mul(g, out), axis=axis, keepdims=True)
        return (mul(out, sub(g, broadcast_to(inner, x.shape))),)

    return _make("softmax", value, (x,), backward)


def log_softmax(x: Any, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    value = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        total = broadcast_to(tsum(g, axis=axis, keepdims=True), x.shape)
        return (sub(g, mul(exp(out), total)),)

    return _make("log_softmax", value, (x,), backward)


# -- linear algebra -------------------------------------------------------


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    value = a.data @ b.data

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        if a.ndim == 2 and b.ndim == 2:
            return matmul(g, transpose(b)), matmul(transpose(a), g)
        if a.ndim == 2:
            return outer(g, b), matmul(transpose(a), g)
        if b.ndim == 2:
            return matmul(b, g), outer(a, g)
        return mul(g, b), mul(g, a)

    return _make("matmul", value, (a, b), backward)


def outer(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return matmul(reshape(a, (a.size, 1)), reshape(b, (1, b.size)))


def solve(A: Any, b: Any) -> Tensor:
    """Solve ``A x = b`` for square ``A``; differentiable in both arguments."""
    A, b = as_tensor(A), as_tensor(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or b.ndim not in (1, 2) or b.shape[0] != A.shape[0]:
        raise ShapeError(f"solve: incompatible shapes {A.shape} and {b.shape}")
    try:
        value = np.linalg.solve(A.data, b.data)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"solve: singular matrix ({exc})") from exc

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, Tensor]:
        gb = solve(transpose(A), g)
        if b.ndim == 1:
            gA = neg(outer(gb, out))
        else:
            gA = neg(matmul(gb, transpose(out)))
        return gA, gb

    return _make("solve", value, (A, b), backward)


def transpose(x: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        return x
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (transpose(g, inv),)

    return _make("transpose", np.transpose(x.data, axes), (x,), backward)


# -- structural -----------------------------------------------------------


def reshape(x: Any, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        value = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from exc

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (reshape(g, x.shape),)

    return _make("reshape", value, (x,), backward)


def getitem(x: Any, index: Any) -> Tensor:
    x = as_tensor(x)
    try:
        value = np.array(x.data[index], dtype=np.float64)
    except IndexError as exc:
        raise ShapeError(f"slice: bad index for shape {x.shape}: {exc}") from exc

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (scatter_add(g, index, x.shape),)

    return _make("slice", value, (x,), backward)


def scatter_add(g: Any, index: Any, shape: tuple[int, ...]) -> Tensor:
    """Zeros of ``shape`` with ``g`` accumulated at ``index`` (adjoint of slicing)."""
    g = as_tensor(g)
    value = np.zeros(shape)
    np.add.at(value, index, g.data)

    def backward(gg: Tensor, out: Tensor) -> tuple[Tensor]:
        return (getitem(gg, index),)

    return _make("scatter_add", value, (g,), backward)


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    nd = ts[0].ndim
    axis = _norm_axis(axis, nd)
    for t in ts:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}")
    value = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor, ...]:
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * nd
            idx[axis] = slice(int(lo), int(hi))
            grads.append(getitem(g, tuple(idx)))
        return tuple(grads)

    return _make("concat", value, tuple(ts), backward)


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = []
    for t in ts:
        shp = list(t.shape)
        shp.insert(axis if axis >= 0 else len(shp) + 1 + axis, 1)
        expanded.append(reshape(t, tuple(shp)))
    return concat(expanded, axis=axis)


# -- neighbourhood aggregation -------------------------------------------

NEIGHBOR_KERNEL = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])


def aggregate3x3_array(x: np.ndarray) -> np.ndarray:
    """Sum over the 8 neighbours of each cell, zero padded (first two axes)."""
    h, w = x.shape[:2]
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (x.ndim - 2)
    xp = np.pad(x, pad)
    out = np.zeros_like(x, dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            if di == 1 and dj == 1:
                continue
            out += xp[di : di + h, dj : dj + w]
    return out


def neighborhood_aggregate(x: Any) -> Tensor:
    """Convolve the first two axes with the fixed 3x3 neighbour kernel.

    The kernel is ones with a zero centre and the boundary is zero padded, so
    the operator is self-adjoint.
    """
    x = as_tensor(x)
    if x.ndim not in (2, 3) or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"neighborhood_aggregate: expected (H, W[, C]), got {x.shape}")

    def backward(g: Tensor, out: Tensor) -> tuple[Tensor]:
        return (neighborhood_aggregate(g),)

    return _make("aggregate3x3", aggregate3x3_array(x.data), (x,), backward)
