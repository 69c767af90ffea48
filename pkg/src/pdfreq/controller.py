"""Control law u = f(s) and the internal-variable dynamics.

The controller keeps three internal states: a per-bus drive ``s`` whose image
under a strictly increasing map f gives the injection, a per-bus dual price
``lam`` tracking the power-balance constraint, and per-edge virtual angle
differences ``phi`` that decouple the balance constraint from the physical
line angles.  Their update law is

    ds/dt   = -(grad F(f(s)) + omega + lam)
    dlam/dt = gamma_lam * (f(s) - p - C B phi)
    dphi/dt = gamma_phi * (B C^T lam)

Both the linear baseline and the trained monotone network are represented as
the same piecewise-linear law object, so the simulation kernels have a single
code path.
"""

from dataclasses import dataclass

import numpy as np

from . import monotone
from .costs import QuarticCost
from .monotone import MonotoneParams
from .network import NetworkModel


@dataclass(frozen=True)
class PiecewiseLinearLaw:
    """Realized per-bus strictly increasing map: u_i = f_i(s_i), f_i(0) = 0."""

    beta: np.ndarray  # (n, d) sorted breakpoints
    slopes: np.ndarray  # (n, d + 1) positive segment slopes

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        slopes = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        if slopes.shape != (beta.shape[0], beta.shape[1] + 1):
            raise ValueError("slopes must have one more column than beta")
        if np.any(slopes <= 0):
            raise ValueError("all segment slopes must be positive")
        if beta.shape[1] and np.any(np.diff(beta, axis=1) < 0):
            raise ValueError("breakpoints must be sorted ascending per bus")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "slopes", slopes)

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def value(self, s: np.ndarray) -> np.ndarray:
        return monotone.pwl_value(self.beta, self.slopes, s)

    def deriv(self, s: np.ndarray) -> np.ndarray:
        return monotone.pwl_slope(self.beta, self.slopes, s)

    def inverse(self, u: np.ndarray) -> np.ndarray:
        return monotone.pwl_inverse(self.beta, self.slopes, u)

    def antiderivative(self, s: np.ndarray) -> np.ndarray:
        return monotone.pwl_antiderivative(self.beta, self.slopes, s)

    @property
    def lipschitz(self) -> float:
        return float(self.slopes.max())


def linear_law(n: int, gain=1.0) -> PiecewiseLinearLaw:
    """The untrained baseline f_i(s) = k_i s with k_i > 0."""
    gain = np.broadcast_to(np.asarray(gain, dtype=float), (n,))
    return PiecewiseLinearLaw(beta=np.zeros((n, 0)), slopes=gain.reshape(n, 1).copy())


def law_from_params(params: MonotoneParams) -> PiecewiseLinearLaw:
    """Realize the trainable parameters into an evaluable law."""
    canon = params.canonicalized()
    return PiecewiseLinearLaw(beta=canon.beta, slopes=canon.slopes())


@dataclass(frozen=True)
class ControllerGains:
    """Diagonal positive integral gains for lam (per bus) and phi (per edge)."""

    gamma_lam: np.ndarray
    gamma_phi: np.ndarray

    def __post_init__(self):
        gl = np.asarray(self.gamma_lam, dtype=float)
        gp = np.asarray(self.gamma_phi, dtype=float)
        if np.any(gl <= 0) or np.any(gp <= 0):
            raise ValueError("controller gains must be strictly positive")
        object.__setattr__(self, "gamma_lam", gl)
        object.__setattr__(self, "gamma_phi", gp)

    @classmethod
    def for_model(cls, model: NetworkModel, gamma_lam=1.0, gamma_phi=1.0):
        return cls(
            gamma_lam=np.broadcast_to(np.asarray(gamma_lam, float), (model.n,)).copy(),
            gamma_phi=np.broadcast_to(np.asarray(gamma_phi, float), (model.m,)).copy(),
        )


def controller_rhs(
    law: PiecewiseLinearLaw,
    gains: ControllerGains,
    model: NetworkModel,
    cost: QuarticCost,
    omega: np.ndarray,
    s: np.ndarray,
    lam: np.ndarray,
    phi: np.ndarray,
    p: np.ndarray,
):
    """Time derivatives (ds, dlam, dphi) of the controller state."""
    u = law.value(s)
    ds = -(cost.grad(u) + omega + lam)
    dlam = gains.gamma_lam * (u - p - model.C @ (model.B * phi))
    dphi = gains.gamma_phi * (model.B * (model.C.T @ lam))
    return ds, dlam, dphi


def estimate_disturbance(
    model: NetworkModel,
    omega: np.ndarray,
    omega_dot: np.ndarray,
    u: np.ndarray,
    theta: np.ndarray,
    phi: np.ndarray,
    use_virtual_angles: bool = False,
) -> np.ndarray:
    """Reconstruct the unmeasured step disturbance from local measurements.

    With the physical line angles this is an exact rearrangement of the swing
    equation, so simulator-exact ``omega_dot`` reproduces p to machine
    precision; a finite-difference ``omega_dot`` gives an O(h) estimate.
    ``use_virtual_angles=True`` substitutes the controller's virtual angles,
    which agree with the physical ones only at equilibrium; it is kept
    selectable but is not the default.
    """
    angles = phi if use_virtual_angles else theta
    flow = model.C @ (model.B * angles)
    return -model.M * omega_dot + u - model.D * omega - flow
