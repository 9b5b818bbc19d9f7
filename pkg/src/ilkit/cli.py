"""Experiment runner: ``ilkit <subcommand> [--config PATH] [--seed N] [--out DIR] [--quiet]``.

Every run writes its metrics CSV, weights, a config snapshot and a manifest
with content hashes into the output directory. Exit codes: 0 success,
2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .ad import ParameterStore, load_weights, save_weights

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SUBCOMMANDS = (
    "blo-selftest",
    "astar-train",
    "astar-eval",
    "mpc-train",
    "pgo-train",
    "mtsp-train",
    "mtsp-eval",
    "estimator-bench",
    "generate",
)
GENERATE_KINDS = ("maze", "mtsp", "pgo-trajectory")
MODULE_OF = {
    "blo-selftest": "blo-engine",
    "astar-train": "astar-planner",
    "astar-eval": "astar-planner",
    "mpc-train": "mpc-control",
    "pgo-train": "pgo",
    "mtsp-train": "mtsp",
    "mtsp-eval": "mtsp",
    "estimator-bench": "discrete-grad",
    "generate": "generate",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


class Unsatisfiable(RuntimeError):
    """Generator parameters that admit no instance."""


# -- settings -------------------------------------------------------------------


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass
class BloSelftestSettings:
    seed: int = 0
    cases: int = 50

    def validate(self) -> None:
        _check(self.cases >= 1, "cases", "must be >= 1")


@dataclass
class AstarTrainSettings:
    seed: int = 0
    size: int = 32
    n_train: int = 500
    n_val: int = 100
    n_test: int = 100
    epochs: int = 3
    lr: float = 3e-4
    batch: int = 8
    eval_every: int = 10
    temperature: float = 1.0
    w_a: float = 1.0
    w_l: float = 1.0
    width: int = 16
    min_cost_ok: float = 0.99

    def validate(self) -> None:
        _check(self.size >= 8, "size", "must be >= 8")
        for k in ("n_train", "n_val", "n_test", "epochs", "batch", "eval_every", "width"):
            _check(getattr(self, k) >= 1, k, "must be >= 1")
        for k in ("lr", "temperature"):
            _check(getattr(self, k) > 0, k, "must be > 0")
        for k in ("w_a", "w_l"):
            _check(getattr(self, k) >= 0, k, "must be >= 0")
        _check(0 <= self.min_cost_ok <= 1, "min_cost_ok", "must lie in [0, 1]")


@dataclass
class AstarEvalSettings:
    seed: int = 0
    weights: Optional[str] = None  # None: shipped pretrained weights
    maps: list = field(default_factory=list)  # map files; empty: generate n_maps
    n_maps: int = 100
    size: int = 32
    timing_repeats: int = 3

    def validate(self) -> None:
        _check(self.weights is None or isinstance(self.weights, str), "weights", "must be null or a path")
        _check(all(isinstance(m, str) for m in self.maps), "maps", "must be a list of paths")
        _check(self.n_maps >= 1, "n_maps", "must be >= 1")
        _check(self.size >= 8, "size", "must be >= 8")
        _check(self.timing_repeats >= 1, "timing_repeats", "must be >= 1")


def _impc_fields() -> dict:
    from .mpc import IMpcConfig

    return {f.name: f.default for f in dataclasses.fields(IMpcConfig)}


@dataclass
class PgoTrainSettings:
    seed: int = 0
    n_nodes: int = 60
    laps: float = 3.0
    iters: int = 50
    lr: float = 4e-3
    bias: list = field(default_factory=lambda: [0.04, -0.03, 0.01])
    scale: float = 1.1

    def validate(self) -> None:
        _check(self.n_nodes >= 3, "n_nodes", "must be >= 3")
        _check(self.laps > 0, "laps", "must be > 0")
        _check(self.iters >= 1, "iters", "must be >= 1")
        _check(self.lr > 0, "lr", "must be > 0")
        _check(len(self.bias) == 3 and all(isinstance(b, (int, float)) for b in self.bias), "bias", "must be 3 numbers")
        _check(self.scale > 0, "scale", "must be > 0")


def _check_depot(depot) -> None:
    if depot is not None:
        ok = len(depot) == 2 and all(isinstance(v, (int, float)) and 0 <= v <= 1 for v in depot)
        _check(ok, "depot", "must be null or two numbers in [0, 1]")


@dataclass
class MtspTrainSettings:
    seed: int = 0
    instance: Optional[str] = None  # instance file; None: generate one
    n_cities: int = 20
    agents: int = 5
    depot: Optional[list] = None  # None: uniform in the unit square
    iters: int = 200
    samples: int = 32
    lr: float = 1e-2
    lr_surrogate: float = 1e-3
    hidden: int = 64
    surrogate_hidden: int = 256
    estimator: str = "control_variate"

    def validate(self) -> None:
        _check(self.instance is None or isinstance(self.instance, str), "instance", "must be null or a path")
        _check(self.n_cities >= 1, "n_cities", "must be >= 1")
        _check(self.agents >= 1, "agents", "must be >= 1")
        _check(self.n_cities >= self.agents, "n_cities", "must be >= agents")
        _check(self.hidden >= 1, "hidden", "must be >= 1")
        _check(self.surrogate_hidden >= 1, "surrogate_hidden", "must be >= 1")
        _check_depot(self.depot)
        _check(self.iters >= 1, "iters", "must be >= 1")
        _check(self.samples >= 2, "samples", "must be >= 2")
        _check(self.lr > 0, "lr", "must be > 0")
        _check(self.lr_surrogate > 0, "lr_surrogate", "must be > 0")
        try:
            self.train_config()
        except ValueError as e:
            raise ConfigError(f"estimator: {e}") from e

    def train_config(self):
        from .mtsp import IMtspConfig

        return IMtspConfig(self.iters, self.samples, self.lr, self.lr_surrogate, self.hidden, self.surrogate_hidden, self.estimator)


@dataclass
class MtspEvalSettings:
    seed: int = 0
    weights: Optional[str] = None
    instances: list = field(default_factory=list)  # instance files; empty: generate n_instances
    n_instances: int = 10
    n_cities: int = 50
    agents: int = 5
    depot: Optional[list] = None

    def validate(self) -> None:
        _check(isinstance(self.weights, str), "weights", "required: path to a weights file written by mtsp-train")
        _check(all(isinstance(m, str) for m in self.instances), "instances", "must be a list of paths")
        _check(self.n_instances >= 1, "n_instances", "must be >= 1")
        _check(self.agents >= 1, "agents", "must be >= 1")
        _check(self.n_cities >= self.agents, "n_cities", "must be >= agents")
        _check_depot(self.depot)


@dataclass
class EstimatorBenchSettings:
    seed: int = 0
    shapes: list = field(default_factory=lambda: [[1, 4], [3, 4], [2, 8]])
    samples: int = 10_000

    def validate(self) -> None:
        ok = all(
            isinstance(s, list) and len(s) == 2 and all(isinstance(v, int) and v >= 1 for v in s) and s[1] >= 2
            for s in self.shapes
        )
        _check(ok and len(self.shapes) >= 1, "shapes", "must be a non-empty list of [rows, classes] with classes >= 2")
        _check(self.samples >= 2, "samples", "must be >= 2")


@dataclass
class GenerateSettings:
    seed: int = 0
    count: int = 1
    size: int = 32  # maze side
    min_dist: Optional[float] = None  # maze start-goal distance; None: 0.75 size
    n_cities: int = 50
    agents: int = 5
    depot: Optional[list] = None
    n_nodes: int = 60
    laps: float = 3.0
    bias: list = field(default_factory=lambda: [0.04, -0.03, 0.01])
    scale: float = 1.1

    def validate(self) -> None:
        _check(self.count >= 1, "count", "must be >= 1")
        _check(self.size >= 3, "size", "must be >= 3")
        _check(self.n_cities >= 1, "n_cities", "must be >= 1")
        _check(self.agents >= 1, "agents", "must be >= 1")
        _check(self.n_cities >= self.agents, "n_cities", "must be >= agents")
        _check_depot(self.depot)
        _check(self.n_nodes >= 3, "n_nodes", "must be >= 3")
        _check(self.laps > 0, "laps", "must be > 0")
        _check(len(self.bias) == 3 and all(isinstance(b, (int, float)) for b in self.bias), "bias", "must be 3 numbers")
        _check(self.scale > 0, "scale", "must be > 0")


SETTINGS = {
    "blo-selftest": BloSelftestSettings,
    "astar-train": AstarTrainSettings,
    "astar-eval": AstarEvalSettings,
    "pgo-train": PgoTrainSettings,
    "mtsp-train": MtspTrainSettings,
    "mtsp-eval": MtspEvalSettings,
    "estimator-bench": EstimatorBenchSettings,
    "generate": GenerateSettings,
}


def _coerce(key: str, value: Any, default: Any) -> Any:
    if default is None:
        if value is None or isinstance(value, (str, list, int, float)) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: unsupported value {value!r}")
    if isinstance(default, bool):
        _check(isinstance(value, bool), key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        _check(isinstance(value, int) and not isinstance(value, bool), key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), key, f"expected a number, got {value!r}")
        _check(np.isfinite(value), key, "must be finite")
        return float(value)
    if isinstance(default, str):
        _check(isinstance(value, str), key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        _check(isinstance(value, list), key, f"expected a list, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported value {value!r}")


def _defaults(subcommand: str) -> dict:
    if subcommand == "mpc-train":
        return {"seed": 0, **_impc_fields()}
    cls = SETTINGS[subcommand]
    return {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}


def parse_settings(subcommand: str, raw: dict, seed: Optional[int] = None) -> Any:
    """Build the validated settings object; unknown keys and out-of-range values raise ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    defaults = _defaults(subcommand)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key for {subcommand}")
    values = {k: _coerce(k, v, defaults[k]) for k, v in raw.items()}
    if seed is not None:
        values["seed"] = seed
    if subcommand == "mpc-train":
        from .mpc import IMpcConfig

        s = values.pop("seed", 0)
        try:
            cfg = IMpcConfig(**values)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return s, cfg
    obj = SETTINGS[subcommand](**values)
    obj.validate()
    return obj


def settings_dict(subcommand: str, settings: Any) -> dict:
    if subcommand == "mpc-train":
        seed, cfg = settings
        return {"seed": seed, **dataclasses.asdict(cfg)}
    return dataclasses.asdict(settings)


# -- run plumbing -----------------------------------------------------------------


def build_id() -> str:
    """Package version plus a hash of the package sources."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return f"ilkit-{__version__}+{h.hexdigest()[:12]}"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _cell(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


class Run:
    def __init__(self, subcommand: str, out: Path, quiet: bool) -> None:
        self.subcommand = subcommand
        self.out = Path(out)
        self.quiet = quiet
        self.files: list = []
        self.out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(f"{self.subcommand}: {msg}", flush=True)

    def write_csv(self, name: str, header: list, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        return p

    def manifest(self, config: dict, extra: Optional[dict] = None) -> Path:
        files = {n: {"sha256": sha256_file(self.out / n), "bytes": (self.out / n).stat().st_size} for n in sorted(set(self.files))}
        doc = {"subcommand": self.subcommand, "build": build_id(), "config": config, "files": files}
        if extra:
            doc.update(extra)
        p = self.out / "manifest.json"
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return p


def shipped_iastar_weights() -> Path:
    return Path(str(resources.files("ilkit") / "data" / "iastar_weights.json"))


# -- subcommands ------------------------------------------------------------------


def cmd_blo_selftest(s: BloSelftestSettings, run: Run) -> int:
    from .selftest import run_selftest

    results = run_selftest(s.seed, s.cases)
    run.write_csv("selftest.csv", ["check", "cases", "max_error", "tolerance", "passed"],
                  [[r.name, r.cases, r.max_error, r.tolerance, int(r.passed)] for r in results])
    for r in results:
        run.say(f"{r.name}: {r.cases} cases, max error {r.max_error:.2e} (tolerance {r.tolerance:.0e}) {'ok' if r.passed else 'FAIL'}")
    worst = max(r.max_error / r.tolerance for r in results)
    run.say(f"{sum(r.passed for r in results)}/{len(results)} checks passed, worst error/tolerance {worst:.2e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def astar_datasets(s: AstarTrainSettings) -> tuple[list, list, list]:
    """Train, validation and test maps from independent seeded streams."""
    from .rng import make_rng

    return tuple(_maps(make_rng(s.seed, 1, part), n, s.size) for part, n in enumerate((s.n_train, s.n_val, s.n_test)))


def _maps(rng: np.random.Generator, n: int, size: int) -> list:
    from .astar import random_instance

    return [random_instance(rng, size) for _ in range(n)]


def _astar_rows(evals) -> list:
    return [[e.map_id, e.exp_pct, e.rt_pct, e.cost_ratio] for e in evals]


ASTAR_HEADER = ["map_id", "exp_pct", "rt_pct", "cost_ratio"]


def cmd_astar_train(s: AstarTrainSettings, run: Run) -> int:
    from .astar import IAStarConfig, evaluate_map, train_iastar
    from .rng import make_rng

    train, val, test = astar_datasets(s)
    run.say(f"data: {len(train)} train / {len(val)} validation / {len(test)} test maps, {s.size}x{s.size}")
    cfg = IAStarConfig(s.epochs, s.lr, s.w_a, s.w_l, s.temperature, s.batch, s.width, s.eval_every, s.min_cost_ok)
    params, hist = train_iastar(train, cfg, make_rng(s.seed, 0), val)
    save_weights(run.path("weights.json"), params)
    run.write_csv("train_history.csv", ["step", "ul_cost"], enumerate(hist.step_cost))
    run.write_csv("validation.csv", ["step", "exp_pct", "cost_ok"], zip(hist.val_step, hist.val_exp, hist.val_cost_ok))
    best = hist.val_exp[hist.val_step.index(hist.best_step)] if hist.best_step in hist.val_step else float("nan")
    run.say(f"train: {len(hist.step_cost)} steps, checkpoint step {hist.best_step} (validation Exp {best:.1f}%)")
    evals = [evaluate_map(k, m, params.values()) for k, m in enumerate(test)]
    run.write_csv("astar_metrics.csv", ASTAR_HEADER, _astar_rows(evals))
    exp = float(np.mean([e.exp_pct for e in evals]))
    ok = float(np.mean([e.cost_ratio <= 1.05 + 1e-12 for e in evals]))
    run.say(f"test: mean Exp {exp:.1f}%, path cost within 1.05 of optimal on {100 * ok:.0f}% of maps")
    return EXIT_OK


def cmd_astar_eval(s: AstarEvalSettings, run: Run) -> int:
    from .astar import evaluate_map, load_map
    from .rng import make_rng

    wpath = Path(s.weights) if s.weights else shipped_iastar_weights()
    params = load_weights(wpath)
    maps = [load_map(m) for m in s.maps] if s.maps else _maps(make_rng(s.seed, 1, 2), s.n_maps, s.size)
    evals = [evaluate_map(k, m, params, s.timing_repeats) for k, m in enumerate(maps)]
    run.write_csv("astar_metrics.csv", ASTAR_HEADER, _astar_rows(evals))
    exp = float(np.mean([e.exp_pct for e in evals]))
    rt = float(np.mean([e.rt_pct for e in evals]))
    ok = float(np.mean([e.cost_ratio <= 1.05 + 1e-12 for e in evals]))
    run.say(f"{len(maps)} maps with {wpath.name}: mean Exp {exp:.1f}%, mean Rt {rt:.1f}%, within 1.05 on {100 * ok:.0f}%")
    return EXIT_OK


def cmd_mpc_train(s, run: Run) -> int:
    from .mpc import impc_train, write_mpc_csv
    from .rng import make_rng

    seed, cfg = s
    res = impc_train(cfg, make_rng(seed, 0))
    write_mpc_csv(run.path("mpc_metrics.csv"), res.history)
    w = dict(res.denoiser.values())
    w["p_hat"] = np.array(res.p_hat)
    save_weights(run.path("weights.json"), w)
    h = [r for r in res.history if np.isfinite(r.rmse)]
    err = abs(res.p_hat - cfg.p_true) / cfg.p_true
    ratio = h[-1].rmse / h[0].rmse if h else float("nan")
    run.say(f"{cfg.episodes} episodes: p_hat {res.p_hat:.4f} (error {100 * err:.2f}%), final/first RMSE {ratio:.3f}")
    return EXIT_OK


def cmd_pgo_train(s: PgoTrainSettings, run: Run) -> int:
    from .pgo import biased_sensor, imperative_slam_train, looping_trajectory, write_slam_csv
    from .rng import make_rng

    traj = biased_sensor(looping_trajectory(make_rng(s.seed, 4), s.n_nodes, s.laps), s.bias, s.scale)
    res = imperative_slam_train(traj, s.iters, s.lr)
    write_slam_csv(run.path("pgo_metrics.csv"), res.history)
    save_weights(run.path("weights.json"), {"theta": res.theta})
    a0, a1 = res.history[0].ate_frontend, res.history[-1].ate_frontend
    run.say(f"{s.iters} iterations: front-end ATE {a0:.4f} -> {a1:.4f} ({100 * (1 - a1 / a0):.1f}% lower), theta {np.round(res.theta, 4).tolist()}")
    return EXIT_OK


def _mtsp_instances(paths, n, n_cities, agents, depot, rng) -> list:
    from .mtsp import load_instance, random_mtsp

    if paths:
        return [load_instance(p) for p in paths]
    return [random_mtsp(rng, n_cities, agents, depot) for _ in range(n)]


def cmd_mtsp_train(s: MtspTrainSettings, run: Run) -> int:
    from .mtsp import evaluate_allocation, imtsp_train, save_instance, write_mtsp_csv
    from .rng import make_rng

    (inst,) = _mtsp_instances([s.instance] if s.instance else [], 1, s.n_cities, s.agents, s.depot, make_rng(s.seed, 7))
    save_instance(run.path("instance.json"), inst)
    res = imtsp_train(inst, s.train_config(), make_rng(s.seed, 8))
    write_mtsp_csv(run.path("mtsp_metrics.csv"), res.history)
    w = dict(res.alloc.values())
    if res.surrogate is not None:
        w.update(res.surrogate.values())
    save_weights(run.path("weights.json"), w)
    (ev,) = evaluate_allocation(res.alloc, [inst])
    post = res.history[min(20, len(res.history) - 1):]
    below = np.mean([r.log_grad_variance < r.score_log_variance for r in post])
    run.say(f"{s.iters} iterations on {inst.n_cities} cities / {inst.agents} agents: greedy max-route {ev.minmax:.4f} vs sector baseline {ev.baseline_minmax:.4f}")
    run.say(f"surrogate variance below score variance on {100 * below:.0f}% of post-warmup iterations")
    return EXIT_OK


def _alloc_store(weights: dict) -> ParameterStore:
    store = ParameterStore()
    for k, v in weights.items():
        if k.startswith("alloc."):
            store.add(k, v)
    if "alloc.W2" not in store:
        raise ValueError("weights file has no allocation network (alloc.*)")
    return store


def cmd_mtsp_eval(s: MtspEvalSettings, run: Run) -> int:
    from .mtsp import evaluate_allocation
    from .rng import make_rng

    alloc = _alloc_store(load_weights(s.weights))
    agents = alloc["alloc.W2"].value.shape[1]
    insts = _mtsp_instances(s.instances, s.n_instances, s.n_cities, agents, s.depot, make_rng(s.seed, 9))
    for k, inst in enumerate(insts):
        if inst.agents != agents:
            raise ValueError(f"instance {k} has {inst.agents} agents, the weights expect {agents}")
    evals = evaluate_allocation(alloc, insts)
    run.write_csv("mtsp_eval.csv", ["instance_id", "minmax", "baseline_minmax"], [[e.instance_id, e.minmax, e.baseline_minmax] for e in evals])
    m, b = np.mean([e.minmax for e in evals]), np.mean([e.baseline_minmax for e in evals])
    run.say(f"{len(evals)} instances: mean max-route {m:.4f} vs sector baseline {b:.4f}")
    return EXIT_OK


def cmd_estimator_bench(s: EstimatorBenchSettings, run: Run) -> int:
    from .selftest import variance_ratio

    rows = []
    for k, (r, c) in enumerate(s.shapes):
        rho, ratio = variance_ratio(s.seed, (r, c), s.samples)
        rows.append([k, r, c, rho, ratio])
    run.write_csv("estimator_bench.csv", ["toy", "rows", "classes", "surrogate_corr", "variance_ratio"], rows)
    for k, r, c, rho, ratio in rows:
        run.say(f"toy {k} ({r}x{c}): surrogate correlation {rho:.3f}, control-variate/score variance {ratio:.3e}")
    return EXIT_OK


def cmd_generate(kind: str, s: GenerateSettings, run: Run) -> int:
    from .rng import make_rng

    rng = make_rng(s.seed, 10, GENERATE_KINDS.index(kind))
    if kind == "maze":
        from .astar import dijkstra, random_instance, save_map

        if s.size < 5:
            raise Unsatisfiable(f"size: a {s.size}x{s.size} maze has no room for a start and a goal")
        for k in range(s.count):
            try:
                inst = random_instance(rng, s.size, s.min_dist)
            except RuntimeError as e:
                raise Unsatisfiable(f"min_dist: {e}") from e
            if not np.isfinite(dijkstra(inst)[inst.start]):
                raise RuntimeError("generated maze is not solvable")
            save_map(run.path(f"maze_{k:03d}.txt"), inst)
        run.say(f"{s.count} {s.size}x{s.size} maze(s) written")
    elif kind == "mtsp":
        from .mtsp import random_mtsp, save_instance

        for k in range(s.count):
            save_instance(run.path(f"mtsp_{k:03d}.json"), random_mtsp(rng, s.n_cities, s.agents, s.depot))
        run.say(f"{s.count} instance(s) with {s.n_cities} cities / {s.agents} agents written")
    else:
        from .pgo import SyntheticFrontEnd, biased_sensor, frontend_graph, looping_trajectory, save_graph

        for k in range(s.count):
            traj = biased_sensor(looping_trajectory(rng, s.n_nodes, s.laps), s.bias, s.scale)
            save_graph(run.path(f"pgo_{k:03d}.graph"), frontend_graph(traj, SyntheticFrontEnd().theta))
            with open(run.path(f"pgo_{k:03d}_truth.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["node", "x", "y", "theta"])
                for i, p in enumerate(traj.truth):
                    w.writerow([i] + [repr(float(v)) for v in p])
        run.say(f"{s.count} trajectory graph(s) with {s.n_nodes} nodes written")
    return EXIT_OK


COMMANDS: dict[str, Callable] = {
    "blo-selftest": cmd_blo_selftest,
    "astar-train": cmd_astar_train,
    "astar-eval": cmd_astar_eval,
    "mpc-train": cmd_mpc_train,
    "pgo-train": cmd_pgo_train,
    "mtsp-train": cmd_mtsp_train,
    "mtsp-eval": cmd_mtsp_eval,
    "estimator-bench": cmd_estimator_bench,
}


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ilkit", description="Bilevel-learning experiments.")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name == "generate":
            p.add_argument("kind", choices=GENERATE_KINDS)
        p.add_argument("--config", type=Path, help="JSON object of settings; unknown keys are rejected")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, help="output directory (default runs/<subcommand>)")
        p.add_argument("--quiet", action="store_true", help="no summary lines")
    return ap


def _load_config(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"config: cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON ({e.msg} at line {e.lineno})") from e


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    sub = args.subcommand
    try:
        settings = parse_settings(sub, _load_config(args.config), args.seed)
    except ConfigError as e:
        print(f"ilkit {sub}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(sub, args.out or Path("runs") / (sub if sub != "generate" else f"generate-{args.kind}"), args.quiet)
    snapshot = settings_dict(sub, settings)
    try:
        (run.path("config.json")).write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
        if sub == "generate":
            code = cmd_generate(args.kind, settings, run)
        else:
            code = COMMANDS[sub](settings, run)
    except Unsatisfiable as e:
        print(f"ilkit {sub}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - report any module failure with context
        print(f"ilkit {sub}: runtime error in {MODULE_OF[sub]}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    run.manifest(snapshot, {"kind": args.kind} if sub == "generate" else None)
    return code


if __name__ == "__main__":
    sys.exit(main())
