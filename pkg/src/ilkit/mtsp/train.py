"""Control-variate hypergradient and imperative MTSP training."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .. import ad
from ..ad import Adam, ParameterStore, Tape, gradient
from ..discrete import CategoricalDistribution, VarianceTracker, track_variance
from .instance import MtspInstance
from .nets import allocation_logits, allocation_probs, init_allocation_net, init_surrogate_net, surrogate_coefficients
from .tsp import allocation_cost, angular_sector_assignment

ESTIMATORS = ("control_variate", "score")


@dataclass
class IMtspConfig:
    iters: int = 200
    samples: int = 32
    lr: float = 1e-2
    lr_surrogate: float = 1e-3
    hidden: int = 64
    surrogate_hidden: int = 256
    estimator: str = "control_variate"

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.iters < 0 or self.samples < 2:
            raise ValueError("iters >= 0 and samples >= 2 required")
        if not (self.lr > 0 and self.lr_surrogate > 0):
            raise ValueError("learning rates must be positive")


@dataclass
class MtspGrad:
    per_sample: np.ndarray  # (S, n) single-sample estimates of dU/dtheta
    theta_grad: dict  # batch mean, per parameter name
    gamma_loss: float  # pooled mean of squared single-sample estimates
    gamma_grad: dict
    surrogate_values: np.ndarray  # L'(z_i)
    score_per_sample: np.ndarray  # (S, n) plain score-function estimates on the same draws


def _flatten(ts) -> ad.Tensor:
    return ad.concat([ad.reshape(t, (t.size,)) for t in ts], axis=0)


def _unflatten(vec: np.ndarray, store: ParameterStore, names: list) -> dict:
    out, k = {}, 0
    for n in names:
        size = store[n].value.size
        out[n] = vec[k : k + size].reshape(store[n].value.shape)
        k += size
    return out


def sample_allocations(params: ParameterStore, inst: MtspInstance, rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, N) agent index per city."""
    logits = allocation_logits({k: ad.constant(v) for k, v in params.values().items()}, inst)
    return CategoricalDistribution(logits).sample(rng, n)


def imtsp_grad(
    alloc: ParameterStore,
    surrogate: Optional[ParameterStore],
    inst: MtspInstance,
    z: np.ndarray,
    costs: np.ndarray,
    estimator: str = "control_variate",
) -> MtspGrad:
    """Single-sample estimates [L - L'] grad log f + grad s(f) and the surrogate's variance gradient.

    L'(z_i) = s(onehot z_i) is cut from theta; the pathwise term grad s(f)
    is taken at the probabilities. With ``estimator="score"`` the surrogate
    is ignored and the estimates are L grad log f.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if estimator == "control_variate" and surrogate is None:
        raise ValueError("control-variate estimator needs a surrogate network")
    z = np.asarray(z, dtype=np.int64).reshape(-1, inst.n_cities)
    costs = np.asarray(costs, dtype=np.float64).reshape(-1)
    S = len(z)
    tape = Tape()
    th = alloc.bind(tape)
    names = alloc.trainable_names()
    th_list = [th[n] for n in names]
    dist = CategoricalDistribution(allocation_logits(th, inst))
    lp = dist.log_prob(z)
    score = np.stack([_flatten(gradient(lp[i], th_list)).numpy() for i in range(S)])
    score_ps = costs[:, None] * score
    if estimator == "score":
        mean = score_ps.mean(axis=0)
        return MtspGrad(score_ps, _unflatten(mean, alloc, names), float(np.mean(score_ps**2)), {}, np.zeros(S), score_ps)
    ga = surrogate.bind(tape)
    g_names = surrogate.trainable_names()
    W = surrogate_coefficients(ga, inst, dist.probs)
    onehot = ad.constant(dist.onehot(z).reshape(S, -1))
    s_vals = ad.matmul(onehot, ad.reshape(W, (W.size,)))
    pathwise = _flatten(gradient(ad.tsum(dist.probs * W), th_list, record=True))
    resid = ad.reshape(ad.constant(costs) - s_vals, (S, 1))
    g = resid * ad.constant(score) + ad.reshape(pathwise, (1, pathwise.size))
    loss = ad.mean(g * g)
    g_grads = gradient(loss, [ga[n] for n in g_names])
    per_sample = g.numpy()
    return MtspGrad(
        per_sample,
        _unflatten(per_sample.mean(axis=0), alloc, names),
        loss.item(),
        {n: t.numpy() for n, t in zip(g_names, g_grads)},
        s_vals.numpy(),
        score_ps,
    )


@dataclass
class MtspHistoryRow:
    iter: int
    mean_minmax: float
    log_grad_variance: float
    score_log_variance: float  # plain score estimator on the same draws
    mean_surrogate: float


@dataclass
class IMtspResult:
    alloc: ParameterStore
    surrogate: Optional[ParameterStore]
    history: list = field(default_factory=list)


def imtsp_train(
    source: Union[MtspInstance, Callable[[np.random.Generator], MtspInstance]],
    cfg: IMtspConfig,
    rng: np.random.Generator,
    alloc: Optional[ParameterStore] = None,
    surrogate: Optional[ParameterStore] = None,
    log: Optional[Callable[[str], None]] = None,
) -> IMtspResult:
    """Sample allocations, solve the per-agent TSPs, then update theta and gamma.

    ``source`` is one fixed instance or a generator called once per iteration;
    all instances must share the agent count. The gradient variance of each
    iteration is taken over its single-sample estimates.
    """
    fixed = isinstance(source, MtspInstance)
    first = source if fixed else source(rng)
    M = first.agents
    alloc = init_allocation_net(rng, M, cfg.hidden) if alloc is None else alloc.copy()
    if surrogate is None and cfg.estimator == "control_variate":
        surrogate = init_surrogate_net(rng, M, cfg.surrogate_hidden)
    elif surrogate is not None:
        surrogate = surrogate.copy()
    opt_t, opt_g = Adam(cfg.lr), Adam(cfg.lr_surrogate)
    var_cv, var_sc = VarianceTracker(), VarianceTracker()
    hist = []
    for it in range(cfg.iters):
        inst = first if fixed or it == 0 else source(rng)
        if inst.agents != M:
            raise ValueError(f"instance has {inst.agents} agents, training started with {M}")
        z = sample_allocations(alloc, inst, rng, cfg.samples)
        costs = np.array([allocation_cost(inst, zi) for zi in z])
        gr = imtsp_grad(alloc, surrogate, inst, z, costs, cfg.estimator)
        rep = track_variance(var_cv, list(gr.per_sample))
        rep_sc = track_variance(var_sc, list(gr.score_per_sample))
        row = MtspHistoryRow(it, float(costs.mean()), rep.mean_log_variance, rep_sc.mean_log_variance, float(gr.surrogate_values.mean()))
        hist.append(row)
        if log:
            log(f"iter {it}: mean max-route {row.mean_minmax:.4f}, log grad variance {row.log_grad_variance:.3f}")
        alloc.assign(opt_t.step(alloc.values(), gr.theta_grad))
        if gr.gamma_grad:
            surrogate.assign(opt_g.step(surrogate.values(), gr.gamma_grad))
    return IMtspResult(alloc, surrogate, hist)


def greedy_assignment(params: ParameterStore, inst: MtspInstance) -> np.ndarray:
    """Most probable agent per city (ties to the lower index)."""
    return np.argmax(allocation_probs(params.values(), inst), axis=1)


@dataclass
class MtspEval:
    instance_id: int
    minmax: float
    baseline_minmax: float


def evaluate_allocation(params: ParameterStore, instances) -> list:
    """Greedy learned allocation vs the angular-sector baseline, both routed by the same TSP solver."""
    return [
        MtspEval(k, allocation_cost(inst, greedy_assignment(params, inst)), allocation_cost(inst, angular_sector_assignment(inst)))
        for k, inst in enumerate(instances)
    ]


def write_mtsp_csv(path: Union[str, Path], history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "mean_minmax", "log_grad_variance"])
        for r in history:
            w.writerow([r.iter, repr(r.mean_minmax), repr(r.log_grad_variance)])
