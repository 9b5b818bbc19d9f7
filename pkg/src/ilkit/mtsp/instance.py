"""Min-max MTSP instances, their JSON file, and a uniform generator."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


class InstanceFormatError(ValueError):
    pass


@dataclass
class MtspInstance:
    """Depot and cities in the unit square, visited by ``agents`` tours that start and end at the depot."""

    depot: np.ndarray  # (2,)
    cities: np.ndarray  # (N, 2)
    agents: int

    def __post_init__(self) -> None:
        self.depot = np.array(self.depot, dtype=np.float64).reshape(2)
        self.cities = np.array(self.cities, dtype=np.float64).reshape(-1, 2)
        if isinstance(self.agents, bool) or int(self.agents) != self.agents:
            raise ValueError(f"agents must be an integer, got {self.agents!r}")
        self.agents = int(self.agents)
        if self.agents < 1:
            raise ValueError(f"need at least one agent, got {self.agents}")
        if len(self.cities) < self.agents:
            raise ValueError(f"{len(self.cities)} cities for {self.agents} agents; need N >= M")
        pts = np.vstack([self.depot, self.cities])
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("coordinates must lie in [0, 1]")

    @property
    def n_cities(self) -> int:
        return len(self.cities)

    def to_dict(self) -> dict:
        return {"depot": self.depot.tolist(), "cities": self.cities.tolist(), "agents": self.agents}


def random_mtsp(rng: np.random.Generator, n_cities: int, agents: int, depot=None) -> MtspInstance:
    """Cities uniform in the unit square; the depot too unless given."""
    if n_cities < 1:
        raise ValueError("need at least one city")
    d = rng.random(2) if depot is None else np.asarray(depot, dtype=np.float64)
    return MtspInstance(d, rng.random((n_cities, 2)), agents)


def dumps_instance(inst: MtspInstance) -> str:
    # repr of a float round-trips exactly
    return json.dumps(inst.to_dict(), indent=1) + "\n"


def loads_instance(text: str) -> MtspInstance:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"not JSON: {e}") from e
    if not isinstance(d, dict) or set(d) != {"depot", "cities", "agents"}:
        raise InstanceFormatError("expected an object with exactly the keys depot, cities, agents")
    try:
        return MtspInstance(d["depot"], d["cities"], d["agents"])
    except (TypeError, ValueError) as e:
        raise InstanceFormatError(str(e)) from e


def save_instance(path: Union[str, Path], inst: MtspInstance) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path: Union[str, Path]) -> MtspInstance:
    return loads_instance(Path(path).read_text())
