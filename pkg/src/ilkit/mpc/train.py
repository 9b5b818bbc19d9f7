"""Imperative MPC: jointly learn a measurement denoiser and the plant parameter."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .. import ad
from ..ad import Adam, ParameterStore, Tape, Tensor, gradient
from .lqr import MpcProblem, lqr_backward, lqr_solve
from .metrics import control_metrics
from .plant import LinearPlant, plant_B, simulate_step


@dataclass
class IMpcConfig:
    n: int = 2
    m: int = 1
    p_true: float = 1.0
    p_init_offset: float = 0.5  # relative: p_hat0 = p_true (1 + offset)
    sigma_u: float = 1e-4
    sigma_x: float = 8.73e-2
    sigma_w: float = 0.0
    dt: float = 0.05
    horizon: int = 20
    episodes: int = 30
    steps: int = 200  # control steps per episode
    lr: float = 1e-2
    update_every: int = 10  # control steps per optimizer update
    window: int = 8
    hidden: int = 32
    q_angle: float = 10.0
    q_rate: float = 1.0
    r: float = 0.1
    ref_amp: float = 1.0
    ref_freq: float = 2.0  # rad/s
    band: float = 0.05
    bound: float = 1e3
    p_through_control: bool = False  # also differentiate u*(p_hat) on the model side
    anchor: float = 1.0  # weight of ||x^I_{k+1} - y_{k+1}||^2 in the upper-level loss

    def __post_init__(self) -> None:
        if self.n != 2 * self.m:
            raise ValueError(f"n must be 2m, got n={self.n}, m={self.m}")
        if not self.p_true > 0 or not 1 + self.p_init_offset > 0:
            raise ValueError("p_true and p_true (1 + p_init_offset) must be positive")
        for name in ("horizon", "episodes", "steps", "update_every", "window", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    def plant(self, p: float) -> LinearPlant:
        return LinearPlant(p, self.n, self.m, self.dt, self.sigma_u, self.sigma_x, self.sigma_w)


def init_denoiser(rng: Optional[np.random.Generator], window: int, n: int, hidden: int = 32) -> ParameterStore:
    """Residual perceptron; the zeroed output layer starts it as the identity on the last measurement.

    Biases are frozen at zero, so the tanh network is odd and cannot add a
    constant offset: a constant angle offset leaves the one-step prediction
    loss unchanged and would otherwise drift freely.
    """
    store = ParameterStore()
    ad.init_mlp(store, "den", [window * n, hidden, n], rng, zero_last=True)
    return ParameterStore(ad.Parameter(p.name, p.value, not p.name.startswith("den.b")) for p in store)


def denoise(params, window: np.ndarray) -> Tensor:
    """State estimate from the last W measurements (W, n): y_last + f(window - y_last)."""
    y = np.asarray(window, dtype=np.float64)
    last = y[-1]
    rel = ad.constant((y - last).reshape(1, -1))
    return ad.constant(last) + ad.reshape(ad.mlp(params, "den", rel, 2, act="tanh"), (y.shape[1],))


def reference(cfg: IMpcConfig, t0: int, length: int) -> np.ndarray:
    """(length, n) sinusoidal angle reference and its rate, identical on every axis."""
    t = (t0 + np.arange(length)) * cfg.dt
    w = cfg.ref_freq
    ang, rate = cfg.ref_amp * np.sin(w * t), cfg.ref_amp * w * np.cos(w * t)
    return np.tile(np.stack([ang, rate], axis=1), (1, cfg.m))


def mpc_problem(cfg: IMpcConfig, x0: np.ndarray, t0: int) -> MpcProblem:
    Q = np.diag(np.tile([cfg.q_angle, cfg.q_rate], cfg.m))
    R = cfg.r * np.eye(cfg.m)
    return MpcProblem(cfg.horizon, Q, R, x0, reference=reference(cfg, t0, cfg.horizon + 1))


@dataclass
class MpcControl:
    u: np.ndarray  # (m,) first control
    du_dx0: np.ndarray  # (m, n)
    du_dp: np.ndarray  # (m,)


def mpc_control(cfg: IMpcConfig, p_hat: float, x0: np.ndarray, t0: int, with_dp: bool = True) -> MpcControl:
    """Receding-horizon control and the sensitivities of its first move.

    du/dx0 is the first Riccati gain; du/dp comes from the LQ adjoint.
    """
    A, B = cfg.plant(p_hat).A, cfg.plant(p_hat).B
    prob = mpc_problem(cfg, x0, t0)
    sol = lqr_solve(A, B, prob)
    dB_dp = -B / p_hat
    du_dp = np.zeros(cfg.m)
    for i in range(cfg.m if with_dp else 0):
        g = np.zeros((cfg.horizon, cfg.m))
        g[0, i] = 1.0
        du_dp[i] = float(np.sum(lqr_backward(A, B, prob, sol, grad_controls=g).B * dB_dp))
    return MpcControl(sol.controls[0].copy(), sol.K[0].copy(), du_dp)


@dataclass
class EpisodeRecord:
    episode: int
    ul_loss: float
    p_hat: float
    rmse: float
    st: float
    sse: float
    est_rmse: float  # denoised state vs truth
    raw_rmse: float  # raw measurement vs truth
    aborted: bool = False


@dataclass
class IMpcResult:
    p_hat: float
    denoiser: ParameterStore
    history: list = field(default_factory=list)


def _ul_step(
    cfg: IMpcConfig,
    params: ParameterStore,
    log_p: float,
    win_k: np.ndarray,
    win_k1: np.ndarray,
    ctl: MpcControl,
    x_k_val: np.ndarray,
) -> tuple[float, dict, float]:
    """U = ||x^I_{k+1} - (A x^I_k + B(p_hat) u_k)||^2 + anchor ||x^I_{k+1} - y_{k+1}||^2.

    The anchor ties the denoiser to the data: the prediction term alone is
    also minimised by smooth, self-consistent but biased estimates.  It does
    not involve p_hat.

    u_k enters through its first-order expansion around the applied value,
    whose slopes come from the Riccati gains and the LQ adjoint.
    """
    tape = Tape()
    bound = params.bind(tape)
    rho = tape.variable(np.array(log_p))
    p_hat = ad.exp(rho)
    xk = denoise(bound, win_k)
    xk1 = denoise(bound, win_k1)
    p_val = float(np.exp(log_p))
    u = (
        ad.constant(ctl.u)
        + ad.matmul(ad.constant(ctl.du_dx0), xk - ad.constant(x_k_val))
        + ad.constant(ctl.du_dp) * (p_hat - p_val)
    )
    A = ad.constant(cfg.plant(p_val).A)
    B = plant_B(cfg.m, cfg.dt, p_hat)
    pred = ad.matmul(A, xk) + ad.matmul(B, u)
    err = xk1 - pred
    U = ad.tsum(err * err)
    if cfg.anchor:
        d = xk1 - ad.constant(win_k1[-1])
        U = U + cfg.anchor * ad.tsum(d * d)
    names = params.trainable_names()
    grads = gradient(U, [bound[k] for k in names] + [rho])
    return U.item(), {k: g.numpy() for k, g in zip(names, grads[:-1])}, float(grads[-1].item())


def impc_train(
    cfg: IMpcConfig,
    rng: np.random.Generator,
    denoiser: Optional[ParameterStore] = None,
    train_p: bool = True,
    train_denoiser: bool = True,
    log: Optional[Callable[[str], None]] = None,
) -> IMpcResult:
    """Closed-loop episodes; per step: denoise, solve MPC (lower level), act,
    then score the model's one-step prediction against the next denoised state.

    The model is re-synchronised to the denoised state at every step.  The
    plant state carries over between episodes; a divergent episode is aborted
    and the plant is reset onto the reference.
    """
    params = init_denoiser(rng, cfg.window, cfg.n, cfg.hidden) if denoiser is None else denoiser
    log_p = float(np.log(cfg.p_true * (1.0 + cfg.p_init_offset)))
    plant = cfg.plant(cfg.p_true)
    opt = Adam(cfg.lr)
    t = 0
    state = reference(cfg, 0, 1)[0]
    meas = deque([state + rng.normal(0.0, cfg.sigma_x, cfg.n) for _ in range(cfg.window)], maxlen=cfg.window)
    result = IMpcResult(float(np.exp(log_p)), params)
    for ep in range(cfg.episodes):
        acc_theta = {k: np.zeros_like(params[k].value) for k in params.trainable_names()}
        acc_rho, n_acc = 0.0, 0
        losses, angles, refs, est_err, raw_err = [], [], [], [], []
        aborted = False
        for _ in range(cfg.steps):
            win_k = np.array(meas)
            x_k = denoise(params.values(), win_k).numpy()
            ctl = mpc_control(cfg, float(np.exp(log_p)), x_k, t, with_dp=cfg.p_through_control)
            state, y = simulate_step(plant, state, ctl.u, rng)
            t += 1
            meas.append(y)
            if not np.all(np.isfinite(state)) or np.linalg.norm(state) > cfg.bound:
                aborted = True
                break
            win_k1 = np.array(meas)
            U, g_theta, g_rho = _ul_step(cfg, params, log_p, win_k, win_k1, ctl, x_k)
            losses.append(U)
            angles.append(state[0])
            refs.append(reference(cfg, t, 1)[0, 0])
            est_err.append(denoise(params.values(), win_k1).numpy() - state)
            raw_err.append(y - state)
            for k in acc_theta:
                acc_theta[k] += g_theta[k]
            acc_rho += g_rho
            n_acc += 1
            if n_acc == cfg.update_every:
                grads = {k: v / n_acc for k, v in acc_theta.items()} if train_denoiser else {}
                if train_p:
                    grads["log_p"] = np.array(acc_rho / n_acc)
                vals = params.values()
                vals["log_p"] = np.array(log_p)
                new = opt.step(vals, grads)
                log_p = float(new.pop("log_p"))
                params.assign(new)
                for k in acc_theta:
                    acc_theta[k][...] = 0.0
                acc_rho, n_acc = 0.0, 0
        if aborted:
            state = reference(cfg, t, 1)[0]
            meas = deque([state + rng.normal(0.0, cfg.sigma_x, cfg.n) for _ in range(cfg.window)], maxlen=cfg.window)
        if len(angles) >= 2:
            cm = control_metrics(angles, refs, cfg.band, cfg.dt)
            rec = EpisodeRecord(
                ep, float(np.mean(losses)), float(np.exp(log_p)), cm.rmse, cm.st, cm.sse,
                float(np.sqrt(np.mean(np.square(est_err)))), float(np.sqrt(np.mean(np.square(raw_err)))), aborted,
            )
        else:
            rec = EpisodeRecord(ep, float("nan"), float(np.exp(log_p)), float("nan"), float("nan"), float("nan"), float("nan"), float("nan"), True)
        result.history.append(rec)
        if log:
            log(f"episode {ep}: U {rec.ul_loss:.4g}, p_hat {rec.p_hat:.4f}, rmse {rec.rmse:.4f}, est {rec.est_rmse:.4f}/{rec.raw_rmse:.4f}")
    result.p_hat = float(np.exp(log_p))
    return result


def write_mpc_csv(path: Union[str, Path], history: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "ul_loss", "p_hat", "rmse", "st", "sse"])
        for r in history:
            w.writerow([r.episode, repr(r.ul_loss), repr(r.p_hat), repr(r.rmse), repr(r.st), repr(r.sse)])
