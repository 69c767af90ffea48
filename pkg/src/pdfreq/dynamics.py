"""Closed-loop state, forward integration, and equilibrium diagnostics.

The full state stacks the physical plant (per-edge angle differences
``theta``, per-bus frequency deviations ``omega``) with the controller's
internals (``s``, ``lam``, ``phi``), giving dimension ``3n + 2m``.  Forward
Euler is the reference integrator because training differentiates through
exactly this map; classic RK4 is available for validation runs where
discretization error matters more than Jacobian fidelity.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .controller import ControllerGains, PiecewiseLinearLaw
from .costs import QuarticCost
from .errors import ConfigError, IntegrationBlowupError
from .network import NetworkModel

DEFAULT_BLOWUP = 1e6


@dataclass
class SystemState:
    """One instant of the closed loop: plant (theta, omega) plus controller."""

    theta: np.ndarray  # (m,) line angle differences
    omega: np.ndarray  # (n,) frequency deviations
    s: np.ndarray  # (n,) controller drive
    lam: np.ndarray  # (n,) dual price
    phi: np.ndarray  # (m,) virtual angle differences

    @classmethod
    def zero(cls, model: NetworkModel) -> "SystemState":
        return cls(
            theta=np.zeros(model.m),
            omega=np.zeros(model.n),
            s=np.zeros(model.n),
            lam=np.zeros(model.n),
            phi=np.zeros(model.m),
        )

    def copy(self) -> "SystemState":
        return SystemState(*(np.array(v) for v in self.blocks()))

    def blocks(self):
        return (self.theta, self.omega, self.s, self.lam, self.phi)

    def as_vector(self) -> np.ndarray:
        return np.concatenate(self.blocks())

    @classmethod
    def from_vector(cls, vec: np.ndarray, model: NetworkModel) -> "SystemState":
        n, m = model.n, model.m
        parts = np.split(np.asarray(vec, dtype=float), [m, m + n, m + 2 * n, m + 3 * n])
        return cls(*parts)

    def check_dims(self, model: NetworkModel):
        if self.omega.shape != (model.n,) or self.theta.shape != (model.m,):
            raise ConfigError("state dimensions do not match the network")


@dataclass
class Trajectory:
    """Recorded rollout: rows are time steps tau = 0..K at spacing h."""

    h: float
    p: np.ndarray  # (n,) applied disturbance
    theta: np.ndarray  # (K+1, m)
    omega: np.ndarray  # (K+1, n)
    s: np.ndarray  # (K+1, n)
    lam: np.ndarray  # (K+1, n)
    phi: np.ndarray  # (K+1, m)
    u: np.ndarray  # (K+1, n), u[tau] = f(s[tau])

    @property
    def n_steps(self) -> int:
        return self.omega.shape[0] - 1

    @property
    def T(self) -> float:
        return self.n_steps * self.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.omega.shape[0])

    def final_state(self) -> SystemState:
        return SystemState(
            theta=self.theta[-1].copy(),
            omega=self.omega[-1].copy(),
            s=self.s[-1].copy(),
            lam=self.lam[-1].copy(),
            phi=self.phi[-1].copy(),
        )

    def write_csv(self, path):
        """Columns: t, omega_1..n, u_1..n, s_1..n, lam_1..n."""
        n = self.omega.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["t"]
            for name in ("omega", "u", "s", "lam"):
                header += [f"{name}_{i + 1}" for i in range(n)]
            writer.writerow(header)
            for k, t in enumerate(self.times):
                row = [f"{t:.6f}"]
                for block in (self.omega, self.u, self.s, self.lam):
                    row += [repr(float(v)) for v in block[k]]
                writer.writerow(row)


def rhs(model, law, gains, cost, state: SystemState, p) -> SystemState:
    """Continuous-time right-hand side of the closed loop."""
    u = law.value(state.s)
    flow = model.C @ (model.B * state.theta)
    vflow = model.C @ (model.B * state.phi)
    return SystemState(
        theta=model.C.T @ state.omega,
        omega=(u - p - model.D * state.omega - flow) / model.M,
        s=-(cost.grad(u) + state.omega + state.lam),
        lam=gains.gamma_lam * (u - p - vflow),
        phi=gains.gamma_phi * (model.B * (model.C.T @ state.lam)),
    )


def step(model, law, gains, cost, state: SystemState, p, h: float) -> SystemState:
    """One forward-Euler step (the map the training pass differentiates)."""
    d = rhs(model, law, gains, cost, state, p)
    new = SystemState(*(x + h * dx for x, dx in zip(state.blocks(), d.blocks())))
    vec = new.as_vector()
    if not np.all(np.isfinite(vec)) or np.abs(vec).max() > DEFAULT_BLOWUP:
        raise IntegrationBlowupError(1, float(np.abs(vec[np.isfinite(vec)]).max(initial=0.0)))
    return new


def step_jacobian(model, law, gains, cost, state: SystemState, h: float) -> np.ndarray:
    """Dense Jacobian of the Euler step map, blocks ordered (theta, omega,
    s, lam, phi).  Used for verification; the training pass applies the same
    blocks matrix-free."""
    n, m = model.n, model.m
    C = model.C
    u = law.value(state.s)
    fp = law.deriv(state.s)
    hess = cost.hess(u)
    dim = 3 * n + 2 * m
    J = np.eye(dim)
    i_th = slice(0, m)
    i_om = slice(m, m + n)
    i_s = slice(m + n, m + 2 * n)
    i_la = slice(m + 2 * n, m + 3 * n)
    i_ph = slice(m + 3 * n, dim)
    Minv = 1.0 / model.M
    J[i_th, i_om] += h * C.T
    J[i_om, i_om] -= h * np.diag(model.D * Minv)
    J[i_om, i_th] -= h * (Minv[:, None] * C) * model.B[None, :]
    J[i_om, i_s] += h * np.diag(Minv * fp)
    J[i_s, i_s] -= h * np.diag(hess * fp)
    J[i_s, i_om] -= h * np.eye(n)
    J[i_s, i_la] -= h * np.eye(n)
    J[i_la, i_s] += h * np.diag(gains.gamma_lam * fp)
    J[i_la, i_ph] -= h * (gains.gamma_lam[:, None] * C) * model.B[None, :]
    J[i_ph, i_la] += h * (gains.gamma_phi[:, None] * (C.T * model.B[:, None]))
    return J


def simulate(
    model: NetworkModel,
    law: PiecewiseLinearLaw,
    gains: ControllerGains,
    cost: QuarticCost,
    x0: SystemState,
    p,
    T: float,
    h: float,
    method: str = "euler",
    p_mode: str = "known",
    blowup: float = DEFAULT_BLOWUP,
) -> Trajectory:
    """Roll the closed loop forward for floor(T/h) steps."""
    if h <= 0 or T < h:
        raise ConfigError("need h > 0 and T >= h")
    x0.check_dims(model)
    p = np.asarray(p, dtype=float)
    if p.shape != (model.n,):
        raise ConfigError(f"disturbance must have length {model.n}")
    if law.n != model.n:
        raise ConfigError("control law dimension does not match the network")
    if gains.gamma_lam.shape != (model.n,) or gains.gamma_phi.shape != (model.m,):
        raise ConfigError("controller gain dimensions do not match the network")
    K = int(np.floor(T / h + 1e-9))
    n, m = model.n, model.m
    theta = np.zeros((K + 1, m))
    omega = np.zeros((K + 1, n))
    s = np.zeros((K + 1, n))
    lam = np.zeros((K + 1, n))
    phi = np.zeros((K + 1, m))
    u = np.zeros((K + 1, n))
    theta[0], omega[0], s[0], lam[0], phi[0] = (
        np.asarray(b, dtype=float) for b in x0.blocks()
    )
    args = (
        model.src, model.dst, 1.0 / model.M, model.D, model.B,
        gains.gamma_lam, gains.gamma_phi, law.beta, law.slopes,
        _cost_c(cost, model.n), p, float(h), K,
    )
    if method == "euler":
        mode = {"known": kernels.P_KNOWN, "estimated": kernels.P_ESTIMATED}
        if p_mode not in mode:
            raise ConfigError(f"unknown p_mode {p_mode!r}")
        status = kernels.euler_rollout(
            *args, mode[p_mode], blowup, theta, omega, s, lam, phi, u
        )
    elif method == "rk4":
        if p_mode != "known":
            raise ConfigError("the estimated-disturbance mode requires method='euler'")
        status = kernels.rk4_rollout(*args, blowup, theta, omega, s, lam, phi, u)
    else:
        raise ConfigError(f"unknown integration method {method!r}")
    if status >= 0:
        finite = np.abs(omega[status][np.isfinite(omega[status])])
        raise IntegrationBlowupError(status, float(finite.max(initial=np.inf)))
    return Trajectory(h=float(h), p=p, theta=theta, omega=omega, s=s, lam=lam, phi=phi, u=u)


def _cost_c(cost: QuarticCost, n: int) -> np.ndarray:
    if cost.n != n:
        raise ConfigError("cost model dimension does not match the network")
    return cost.c


@dataclass
class EquilibriumResiduals:
    """Max-norms of the five state derivatives plus the optimality system."""

    dtheta: float
    domega: float
    ds: float
    dlam: float
    dphi: float
    feas_swing: float  # f(s) - p - D omega - C B theta
    feas_balance: float  # f(s) - p - C B phi
    stationarity: float  # grad F(f(s)) + omega + lam

    def max(self) -> float:
        return max(vars(self).values())

    def as_dict(self) -> dict:
        return dict(vars(self))


def equilibrium_residuals(model, law, gains, cost, state: SystemState, p) -> EquilibriumResiduals:
    d = rhs(model, law, gains, cost, state, np.asarray(p, dtype=float))
    u = law.value(state.s)
    swing = u - p - model.D * state.omega - model.C @ (model.B * state.theta)
    balance = u - p - model.C @ (model.B * state.phi)
    station = cost.grad(u) + state.omega + state.lam

    def mx(v):
        return float(np.abs(v).max(initial=0.0))

    return EquilibriumResiduals(
        dtheta=mx(d.theta),
        domega=mx(d.omega),
        ds=mx(d.s),
        dlam=mx(d.lam),
        dphi=mx(d.phi),
        feas_swing=mx(swing),
        feas_balance=mx(balance),
        stationarity=mx(station),
    )
