"""Transient-performance metrics and the stability certificate function.

The transient loss combines an exponentially weighted frequency energy (which
rewards fast decay), the worst frequency excursion, and the time-averaged
control cost.  Integrals are left-Riemann sums so they coincide with the
discrete loss the training pass differentiates.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import QuarticCost
from .dynamics import SystemState, Trajectory, equilibrium_residuals
from .errors import ConfigError, DegenerateFitError

ENVELOPE_FLOOR = 1e-6


@dataclass(frozen=True)
class MetricConfig:
    alpha: float = 3.0  # exponential rate in the decay metric
    rho_r: float = 0.1  # weight of the decay metric
    rho_n: float = 1.0  # weight of the worst excursion
    rho_c: float = 1.0  # weight of the average cost
    settle_band: float = 5e-3  # p.u. band for the settling time

    def __post_init__(self):
        if self.alpha <= 0 or min(self.rho_r, self.rho_n, self.rho_c) <= 0:
            raise ConfigError("metric weights and alpha must be positive")


def rate_metric(traj: Trajectory, alpha: float) -> np.ndarray:
    """Per-bus sum of e^(alpha t) * omega^2 * h over steps 0..K-1."""
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    K = traj.n_steps
    t = traj.h * np.arange(K)
    if alpha * t[-1] > 700.0:
        raise OverflowError(
            "exp(alpha * T) exceeds float range; use a smaller alpha or horizon"
        )
    weights = np.exp(alpha * t)
    out = (weights[:, None] * traj.omega[:K] ** 2).sum(axis=0) * traj.h
    if not np.all(np.isfinite(out)):
        raise OverflowError(
            "decay metric overflowed; use a smaller alpha or horizon"
        )
    return out


def nadir(traj: Trajectory) -> np.ndarray:
    """Per-bus maximum |omega| over all recorded steps."""
    return np.abs(traj.omega).max(axis=0)


def avg_cost(traj: Trajectory, cost: QuarticCost) -> np.ndarray:
    """Per-bus time-averaged cost of the applied inputs."""
    K = traj.n_steps
    vals = np.zeros(cost.n)
    for k in range(K):
        vals += cost.value(traj.u[k])
    return vals * traj.h / traj.T


def loss(traj: Trajectory, cost: QuarticCost, cfg: MetricConfig) -> float:
    """Weighted transient loss summed over buses."""
    return float(
        (
            cfg.rho_r * rate_metric(traj, cfg.alpha)
            + cfg.rho_n * nadir(traj)
            + cfg.rho_c * avg_cost(traj, cost)
        ).sum()
    )


def settling_time(traj: Trajectory, band: Optional[float] = None) -> float:
    """First time after which every |omega_i| stays inside the band.

    Returns 0.0 for an always-settled trajectory and T when the final sample
    is still outside the band.
    """
    band = 5e-3 if band is None else band
    if band <= 0:
        raise ConfigError("settling band must be positive")
    worst = np.abs(traj.omega).max(axis=1)
    outside = np.nonzero(worst >= band)[0]
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last == traj.n_steps:
        return traj.T
    return float((last + 1) * traj.h)


def envelope_fit(traj: Trajectory, floor: float = ENVELOPE_FLOOR):
    """Least-squares exponential envelope of the post-nadir decay.

    Fits log(max_i |omega_i(t)|) against t from the worst excursion onward,
    dropping samples below ``floor``; returns (amplitude, decay rate).
    """
    worst = np.abs(traj.omega).max(axis=1)
    start = int(np.argmax(worst))
    t = traj.times[start:]
    y = worst[start:]
    keep = y >= floor
    if keep.sum() < 10:
        raise DegenerateFitError(
            f"only {int(keep.sum())} usable points above {floor:g}"
        )
    slope, intercept = np.polyfit(t[keep], np.log(y[keep]), 1)
    return float(math.exp(intercept)), float(-slope)


def marginal_cost_spread(state: SystemState, law, cost: QuarticCost) -> float:
    """Spread of marginal costs across buses; zero at the economic optimum."""
    g = cost.grad(law.value(state.s))
    return float(g.max() - g.min())


def lyapunov_value(
    model,
    law,
    gains,
    cost: QuarticCost,
    state: SystemState,
    eq: SystemState,
    p,
    eq_tol: float = 1e-6,
) -> float:
    """Energy-like distance to a verified equilibrium; nonnegative, zero only
    at the equilibrium, and non-increasing along exact trajectories."""
    res = equilibrium_residuals(model, law, gains, cost, eq, p)
    if res.max() > eq_tol:
        raise ConfigError(
            f"reference point is not an equilibrium (residual {res.max():.3e})"
        )
    quad = 0.5 * (
        (model.B * (state.theta - eq.theta) ** 2).sum()
        + (model.M * (state.omega - eq.omega) ** 2).sum()
        + ((state.lam - eq.lam) ** 2 / gains.gamma_lam).sum()
        + ((state.phi - eq.phi) ** 2 / gains.gamma_phi).sum()
    )
    bregman = (
        law.antiderivative(state.s)
        - law.antiderivative(eq.s)
        - law.value(eq.s) * (state.s - eq.s)
    ).sum()
    return float(quad + bregman)


@dataclass
class TransientReport:
    """Per-bus transient metrics plus scenario totals."""

    rate: np.ndarray
    nadir: np.ndarray
    avg_cost: np.ndarray
    loss: float
    settling_time: float
    envelope: Optional[tuple]  # (amplitude, decay rate) or None if degenerate

    @property
    def nadir_max(self) -> float:
        return float(self.nadir.max())

    @property
    def cost_total(self) -> float:
        return float(self.avg_cost.sum())


def transient_report(traj: Trajectory, cost: QuarticCost, cfg: MetricConfig) -> TransientReport:
    try:
        envelope = envelope_fit(traj)
    except DegenerateFitError:
        envelope = None
    return TransientReport(
        rate=rate_metric(traj, cfg.alpha),
        nadir=nadir(traj),
        avg_cost=avg_cost(traj, cost),
        loss=loss(traj, cost, cfg),
        settling_time=settling_time(traj, cfg.settle_band),
        envelope=envelope,
    )
