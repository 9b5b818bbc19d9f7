"""Named parameters, weight files and first-order optimizers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    trainable: bool = True


class ParameterStore:
    """Ordered collection of uniquely named parameters."""

    def __init__(self, params: Iterable[Parameter] = ()) -> None:
        self._params: dict[str, Parameter] = {}
        for p in params:
            self.add(p.name, p.value, p.trainable)

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.array(value, dtype=np.float64), trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def values(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self._params.items()}

    def trainable_names(self) -> list[str]:
        return [k for k, p in self._params.items() if p.trainable]

    def bind(self, tape: Tape) -> dict[str, Tensor]:
        """Place trainable parameters on ``tape`` as leaves; others as constants."""
        return {
            k: tape.variable(p.value, name=k) if p.trainable else Tensor(p.value, name=k)
            for k, p in self._params.items()
        }

    def assign(self, values: Mapping[str, np.ndarray]) -> None:
        for k, v in values.items():
            p = self._params[k]
            v = np.array(v, dtype=np.float64)
            if v.shape != p.value.shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {p.value.shape}")
            p.value = v

    def copy(self) -> "ParameterStore":
        return ParameterStore(Parameter(p.name, p.value.copy(), p.trainable) for p in self)

    def num_values(self) -> int:
        return sum(p.value.size for p in self)


def _fmt(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError("weights must be finite to be written")
    return format(float(x), ".17g")


def dumps_weights(params: Union[ParameterStore, Mapping[str, np.ndarray]]) -> str:
    """Serialise ``name -> {shape, data}`` with 17 significant digits."""
    items = params.values().items() if isinstance(params, ParameterStore) else params.items()
    lines = ["{"]
    entries = []
    for name, value in items:
        value = np.asarray(value, dtype=np.float64)
        data = ", ".join(_fmt(v) for v in value.reshape(-1))
        entries.append(
            f"  {json.dumps(name)}: {{\"shape\": {json.dumps(list(value.shape))}, \"data\": [{data}]}}"
        )
    lines.append(",\n".join(entries))
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_weights(text: str) -> dict[str, np.ndarray]:
    raw = json.loads(text)
    out = {}
    for name, entry in raw.items():
        shape = tuple(int(s) for s in entry["shape"])
        data = np.array(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ValueError(f"weight {name!r}: {data.size} values for shape {shape}")
        out[name] = data.reshape(shape)
    return out


def save_weights(path: Union[str, Path], params: Union[ParameterStore, Mapping[str, np.ndarray]]) -> None:
    Path(path).write_text(dumps_weights(params))


def load_weights(path: Union[str, Path]) -> dict[str, np.ndarray]:
    return loads_weights(Path(path).read_text())


@dataclass
class SGD:
    lr: float

    def step(self, values: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {k: values[k] - self.lr * grads[k] if k in grads else values[k] for k in values}


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, values: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        for k, x in values.items():
            if k not in grads:
                out[k] = x
                continue
            g = grads[k]
            m = self.beta1 * self.m.get(k, np.zeros_like(x)) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(k, np.zeros_like(x)) + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            out[k] = x - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def make_optimizer(kind: str, lr: float) -> Union[SGD, Adam]:
    if kind in ("gd", "sgd", "gradient-descent"):
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(
    store: ParameterStore,
    prefix: str,
    sizes: list[int],
    rng: Optional[np.random.Generator],
    zero_last: bool = False,
) -> None:
    """Add ``{prefix}.W{i}`` / ``{prefix}.b{i}`` for a dense stack; ``rng=None`` gives zeros."""
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        if rng is None or (zero_last and last):
            W = np.zeros((a, b))
        else:
            W = glorot(rng, a, b)
        store.add(f"{prefix}.W{i}", W)
        store.add(f"{prefix}.b{i}", np.zeros(b))
