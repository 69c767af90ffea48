"""Training of the monotone control law through the unrolled dynamics.

Each sample is a full forward-Euler rollout under a random step disturbance;
the transient loss is differentiated exactly through every step (reverse
mode, see ``kernels.bptt_backward``), gradients are averaged over the batch,
clipped, and applied with Adam under a step-decayed learning rate.  The
monotonicity constraint needs no projection: the slope reparameterization
keeps every reachable parameter vector inside the valid family, and
re-sorting breakpoints after an update only relabels segments.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .controller import ControllerGains, law_from_params
from .costs import QuarticCost
from .dynamics import Trajectory, simulate, SystemState
from .errors import ConfigError, IntegrationBlowupError
from .metrics import MetricConfig, loss as metric_loss
from .monotone import MonotoneParams, init_params
from .network import NetworkModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 50
    horizon_steps: int = 6000
    h: float = 0.01
    lr: float = 0.4
    decay: float = 0.5
    decay_every: int = 3  # epochs per decay step
    p_low: float = -5.0
    p_high: float = 5.0
    seed: int = 0
    clip_norm: float = 10.0
    max_resample: int = 3
    hidden: int = 20  # breakpoints per bus
    s_max: float = 5.0
    eps_slope: float = 1e-3
    l_max: float = 100.0
    gamma_lam: float = 1.0
    gamma_phi: float = 1.0
    blowup: float = 1e6
    metrics: MetricConfig = field(default_factory=MetricConfig)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.horizon_steps, self.hidden + 1) <= 0:
            raise ConfigError("batch size, epochs, horizon must be positive")
        if not (0.0 < self.decay < 1.0) or self.decay_every <= 0:
            raise ConfigError("decay must lie in (0, 1) with a positive interval")
        if self.h <= 0 or self.lr <= 0 or self.clip_norm <= 0:
            raise ConfigError("h, lr, clip_norm must be positive")
        if self.p_high <= self.p_low:
            raise ConfigError("empty disturbance range")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.decay ** (epoch // self.decay_every)


@dataclass
class Tape:
    """Everything the reverse pass needs to replay one rollout."""

    h: float
    s: np.ndarray  # (K+1, n)
    omega: np.ndarray  # (K+1, n)


def rollout_with_tape(model, params: MonotoneParams, gains, cost, p, cfg: TrainConfig):
    """Forward rollout from the origin; returns the trajectory and its tape."""
    law = law_from_params(params)
    traj = simulate(
        model, law, gains, cost, SystemState.zero(model), p,
        T=cfg.horizon_steps * cfg.h, h=cfg.h, method="euler", blowup=cfg.blowup,
    )
    return traj, Tape(h=cfg.h, s=traj.s, omega=traj.omega)


def backprop(tape: Tape, model, params: MonotoneParams, gains, cost, cfg: TrainConfig):
    """Exact gradient of the discrete transient loss in the raw parameters."""
    if params.d and np.any(np.diff(params.beta, axis=1) < 0):
        raise ConfigError("params must be canonicalized before the reverse pass")
    canon = params
    slopes = canon.slopes()
    n, d = canon.n, canon.d
    gbeta = np.zeros((n, d))
    gslopes = np.zeros((n, d + 1))
    mc = cfg.metrics
    kernels.bptt_backward(
        model.src, model.dst, 1.0 / model.M, model.D, model.B,
        gains.gamma_lam, gains.gamma_phi, canon.beta, slopes, cost.c,
        float(tape.h), mc.alpha, mc.rho_r, mc.rho_n, mc.rho_c,
        tape.s, tape.omega, gbeta, gslopes,
    )
    return {"beta": gbeta, "zeta": gslopes * canon.slope_jac()}


# ---------------------------------------------------------------------------
# Adam on the packed (beta, zeta) vector


def pack(params: MonotoneParams) -> np.ndarray:
    return np.concatenate([params.beta.ravel(), params.zeta.ravel()])


def unpack(vec: np.ndarray, like: MonotoneParams) -> MonotoneParams:
    nb = like.beta.size
    beta = vec[:nb].reshape(like.beta.shape)
    zeta = vec[nb:].reshape(like.zeta.shape)
    return replace(like, beta=beta, zeta=zeta)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


def adam_step(vec, grad, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update with bias correction; returns the new vector."""
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    mhat = state.m / (1.0 - beta1**state.t)
    vhat = state.v / (1.0 - beta2**state.t)
    return vec - lr * mhat / (np.sqrt(vhat) + eps)


def clip_by_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def _resort(params: MonotoneParams, state: AdamState) -> MonotoneParams:
    """Canonicalize breakpoints, carrying the per-breakpoint Adam moments
    through the same permutation."""
    order = np.argsort(params.beta, axis=1, kind="stable")
    if np.array_equal(order, np.arange(params.d)[None, :].repeat(params.n, 0)):
        return params
    nb = params.beta.size
    for moments in (state.m, state.v):
        mb = moments[:nb].reshape(params.beta.shape)
        mb[:] = np.take_along_axis(mb, order, axis=1)
    return replace(params, beta=np.take_along_axis(params.beta, order, axis=1))


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    params: MonotoneParams
    history: np.ndarray  # (epochs,) mean batch loss
    resamples: int


def train(
    model: NetworkModel,
    cost: QuarticCost,
    cfg: TrainConfig,
    init: Optional[MonotoneParams] = None,
) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    params = init if init is not None else init_params(
        model.n, cfg.hidden, seed=cfg.seed,
        s_max=cfg.s_max, eps_slope=cfg.eps_slope, l_max=cfg.l_max,
    )
    params = params.canonicalized()
    gains = ControllerGains.for_model(model, cfg.gamma_lam, cfg.gamma_phi)
    adam = AdamState.zeros(pack(params).size)
    history = np.zeros(cfg.epochs)
    resamples = 0

    for epoch in range(cfg.epochs):
        gacc = np.zeros(pack(params).size)
        losses = np.zeros(cfg.batch_size)
        for b in range(cfg.batch_size):
            traj = tape = None
            for attempt in range(cfg.max_resample + 1):
                p = rng.uniform(cfg.p_low, cfg.p_high, model.n)
                try:
                    traj, tape = rollout_with_tape(model, params, gains, cost, p, cfg)
                    break
                except IntegrationBlowupError as exc:
                    resamples += 1
                    log.warning(
                        "epoch %d sample %d: rollout blew up at step %d "
                        "(attempt %d), resampling", epoch, b, exc.step, attempt + 1,
                    )
            else:
                raise RuntimeError(
                    f"epoch {epoch}: rollout diverged {cfg.max_resample + 1} times "
                    "in a row; lower the learning rate or the step size"
                )
            losses[b] = metric_loss(traj, cost, cfg.metrics)
            grads = backprop(tape, model, params, gains, cost, cfg)
            gacc += np.concatenate([grads["beta"].ravel(), grads["zeta"].ravel()])
        gmean = clip_by_norm(gacc / cfg.batch_size, cfg.clip_norm)
        vec = adam_step(
            pack(params), gmean, adam, cfg.lr_at(epoch),
            cfg.beta1, cfg.beta2, cfg.adam_eps,
        )
        params = _resort(unpack(vec, params), adam)
        history[epoch] = losses.mean()
        log.info("epoch %d: loss %.6g lr %.3g", epoch, history[epoch], cfg.lr_at(epoch))
    return TrainResult(params=params, history=history, resamples=resamples)


# ---------------------------------------------------------------------------
# Finite-difference verification of the reverse pass


def gradient_check(
    seed: int = 0,
    n_buses: int = 2,
    hidden: int = 2,
    steps: int = 50,
    h: float = 0.02,
    fd_eps: float = 1e-6,
) -> float:
    """Max relative error between the reverse pass and central differences
    over every raw parameter of a small random instance."""
    rng = np.random.default_rng(seed)
    edges = tuple((i, i + 1) for i in range(n_buses - 1))
    model = NetworkModel(
        n=n_buses,
        edges=edges,
        M=rng.uniform(0.5, 2.0, n_buses),
        D=rng.uniform(0.5, 2.0, n_buses),
        B=rng.uniform(0.5, 2.0, len(edges)),
    )
    cost = QuarticCost(c=rng.uniform(0.2, 1.0, n_buses), b=rng.uniform(0.0, 1.0, n_buses))
    cfg = TrainConfig(
        batch_size=1, epochs=1, horizon_steps=steps, h=h,
        hidden=hidden, metrics=MetricConfig(alpha=3.0),
    )
    params = init_params(n_buses, hidden, seed=seed)
    # move away from the identity so every parameter is active
    params = replace(
        params,
        beta=np.sort(rng.uniform(-2.0, 2.0, params.beta.shape), axis=1),
        zeta=params.zeta + rng.uniform(-0.5, 0.5, params.zeta.shape),
    )
    gains = ControllerGains.for_model(model)
    p = rng.uniform(-2.0, 2.0, n_buses)

    _, tape = rollout_with_tape(model, params, gains, cost, p, cfg)
    grads = backprop(tape, model, params, gains, cost, cfg)
    analytic = np.concatenate([grads["beta"].ravel(), grads["zeta"].ravel()])

    def loss_at(vec):
        trial = unpack(vec, params)
        traj, _ = rollout_with_tape(model, trial, gains, cost, p, cfg)
        return metric_loss(traj, cost, cfg.metrics)

    base = pack(params)
    fd = np.zeros_like(base)
    for k in range(base.size):
        e = fd_eps * max(1.0, abs(base[k]))
        up = base.copy()
        up[k] += e
        dn = base.copy()
        dn[k] -= e
        fd[k] = (loss_at(up) - loss_at(dn)) / (2.0 * e)
    scale = max(float(np.abs(fd).max()), 1e-12)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6 * scale)
    return float((np.abs(analytic - fd) / denom).max())
