"""Trainable strictly-increasing piecewise-linear scalar functions.

Each bus gets its own scalar map ``u = f_i(s)`` built from ``d`` breakpoints
and ``d + 1`` segment slopes.  Raw slope parameters are unconstrained; the
realized slopes pass through a scaled sigmoid so every segment slope lies in
``(eps_slope, l_max)``.  That makes every member of the family strictly
increasing, globally Lipschitz, and exactly zero at the origin (the value is
anchored by integrating slopes away from zero), so the closed-loop stability
requirements hold by construction for any parameter values the optimizer can
reach.

The continuous function is evaluated through the identity

    f(x) = m_0 x + sum_k (m_k - m_{k-1}) * (relu(x - beta_k) - relu(-beta_k))

which is linear in the slopes; parameter gradients fall out in closed form.
"""

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "pdfreq-law"


@dataclass(frozen=True)
class MonotoneParams:
    """Raw trainable parameters for the per-bus piecewise-linear maps."""

    beta: np.ndarray  # (n, d) breakpoints, each row sorted ascending
    zeta: np.ndarray  # (n, d + 1) raw slope parameters
    eps_slope: float = 1e-3
    l_max: float = 100.0
    s_max: float = 5.0

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        zeta = np.atleast_2d(np.asarray(self.zeta, dtype=float))
        if zeta.shape != (beta.shape[0], beta.shape[1] + 1):
            raise ValueError(
                f"zeta shape {zeta.shape} incompatible with beta shape {beta.shape}"
            )
        if not (0 < self.eps_slope < self.l_max):
            raise ValueError("need 0 < eps_slope < l_max")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "zeta", zeta)

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def d(self) -> int:
        return self.beta.shape[1]

    def slopes(self) -> np.ndarray:
        """Realized segment slopes, each in (eps_slope, l_max)."""
        return self.eps_slope + (self.l_max - self.eps_slope) * _sigmoid(self.zeta)

    def slope_jac(self) -> np.ndarray:
        """d slopes / d zeta (elementwise)."""
        sig = _sigmoid(self.zeta)
        return (self.l_max - self.eps_slope) * sig * (1.0 - sig)

    def canonicalized(self) -> "MonotoneParams":
        """Sort breakpoints; slopes stay attached to their gap position."""
        return replace(self, beta=np.sort(self.beta, axis=1))


def _sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _inv_sigmoid(y: float) -> float:
    return float(np.log(y / (1.0 - y)))


def init_params(
    n: int,
    d: int,
    seed: int = 0,
    s_max: float = 5.0,
    eps_slope: float = 1e-3,
    l_max: float = 100.0,
) -> MonotoneParams:
    """Identity warm start: unit slopes, breakpoints spread over [-s_max, s_max]."""
    rng = np.random.default_rng(seed)
    beta = np.sort(rng.uniform(-s_max, s_max, size=(n, d)), axis=1)
    zeta0 = _inv_sigmoid((1.0 - eps_slope) / (l_max - eps_slope))
    zeta = np.full((n, d + 1), zeta0)
    return MonotoneParams(beta=beta, zeta=zeta, eps_slope=eps_slope, l_max=l_max, s_max=s_max)


# ---------------------------------------------------------------------------
# Piecewise-linear evaluation on realized (beta, slopes) arrays.  All helpers
# broadcast over buses: beta (n, d), slopes (n, d + 1), x (n,).


def pwl_value(beta, slopes, x):
    x = np.asarray(x, dtype=float)
    out = slopes[:, 0] * x
    d = beta.shape[1]
    if d:
        delta = np.diff(slopes, axis=1)
        r = np.maximum(x[:, None] - beta, 0.0) - np.maximum(-beta, 0.0)
        out = out + (delta * r).sum(axis=1)
    return out


def pwl_slope(beta, slopes, x):
    """Derivative at x; at a breakpoint this is the right-segment slope."""
    x = np.asarray(x, dtype=float)
    d = beta.shape[1]
    if not d:
        return slopes[:, 0].copy()
    idx = (x[:, None] >= beta).sum(axis=1)
    return np.take_along_axis(slopes, idx[:, None], axis=1)[:, 0]


def pwl_grads(beta, slopes, x):
    """Per-bus gradients of f(x) in the realized slopes and breakpoints.

    Returns ``(dfdm, dfdb)`` with shapes (n, d + 1) and (n, d), using the
    right-segment subgradient convention at ties.
    """
    x = np.asarray(x, dtype=float)
    n, d = beta.shape
    dfdm = np.empty((n, d + 1))
    if not d:
        dfdm[:, 0] = x
        return dfdm, np.zeros((n, 0))
    r = np.maximum(x[:, None] - beta, 0.0) - np.maximum(-beta, 0.0)
    dfdm[:, 0] = x - r[:, 0]
    dfdm[:, 1:-1] = r[:, :-1] - r[:, 1:]
    dfdm[:, -1] = r[:, -1]
    delta = np.diff(slopes, axis=1)
    dfdb = delta * ((beta <= 0.0).astype(float) - (x[:, None] >= beta).astype(float))
    return dfdm, dfdb


def pwl_breakpoint_values(beta, slopes):
    """f evaluated at every breakpoint, (n, d); monotone along each row."""
    n, d = beta.shape
    vals = np.empty((n, d))
    for k in range(d):
        vals[:, k] = pwl_value(beta, slopes, beta[:, k])
    return vals


def pwl_inverse(beta, slopes, u):
    """Solve f(x) = u per bus (exact, since f is piecewise linear and strictly
    increasing)."""
    u = np.asarray(u, dtype=float)
    n, d = beta.shape
    if not d:
        return u / slopes[:, 0]
    vals = pwl_breakpoint_values(beta, slopes)
    idx = (u[:, None] >= vals).sum(axis=1)
    x = np.empty(n)
    for i in range(n):
        k = idx[i]
        if k == 0:
            x[i] = beta[i, 0] + (u[i] - vals[i, 0]) / slopes[i, 0]
        else:
            x[i] = beta[i, k - 1] + (u[i] - vals[i, k - 1]) / slopes[i, k]
    return x


def pwl_antiderivative(beta, slopes, x):
    """Exact integral of f from 0 to x per bus (piecewise quadratic)."""
    x = np.asarray(x, dtype=float)
    d = beta.shape[1]
    out = 0.5 * slopes[:, 0] * x**2
    if d:
        delta = np.diff(slopes, axis=1)
        rx = np.maximum(x[:, None] - beta, 0.0)
        r0 = np.maximum(-beta, 0.0)
        out = out + (delta * (0.5 * (rx**2 - r0**2) - r0 * x[:, None])).sum(axis=1)
    return out


# ---------------------------------------------------------------------------
# Spec'd scalar views (single bus), used by tests and the gradient checker.


def f_forward(params: MonotoneParams, bus: int, x: float) -> float:
    law = params.slopes()
    return float(pwl_value(params.beta[bus : bus + 1], law[bus : bus + 1], np.array([x]))[0])


def f_input_grad(params: MonotoneParams, bus: int, x: float) -> float:
    law = params.slopes()
    return float(pwl_slope(params.beta[bus : bus + 1], law[bus : bus + 1], np.array([x]))[0])


def f_param_grad(params: MonotoneParams, bus: int, x: float):
    """Gradients of f_i(x) in this bus's raw (beta, zeta) parameters."""
    slopes = params.slopes()
    dfdm, dfdb = pwl_grads(
        params.beta[bus : bus + 1], slopes[bus : bus + 1], np.array([x])
    )
    dzeta = dfdm[0] * params.slope_jac()[bus]
    return dfdb[0], dzeta


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(params: MonotoneParams, path):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "n": params.n,
        "d": params.d,
        "eps_slope": params.eps_slope,
        "l_max": params.l_max,
        "s_max": params.s_max,
        "beta": params.beta.tolist(),
        "zeta": params.zeta.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_checkpoint(path) -> MonotoneParams:
    raw = json.loads(Path(path).read_text())
    if raw.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    return MonotoneParams(
        beta=np.asarray(raw["beta"], dtype=float),
        zeta=np.asarray(raw["zeta"], dtype=float),
        eps_slope=float(raw["eps_slope"]),
        l_max=float(raw["l_max"]),
        s_max=float(raw["s_max"]),
    )
