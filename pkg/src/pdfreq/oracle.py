"""Independent ground-truth solver for the optimal steady state.

The economically optimal injection equalizes marginal costs subject to total
balance: find the common marginal price ``mu`` with ``sum_i (dF_i)^-1(mu) =
sum_i p_i``, then recover angles from the network balance.  The solver is
deliberately bisection-based and shares no code with the simulator, so the
two can cross-check each other.  ``verify_uniqueness`` attacks the same
problem with multi-start first-order descent as a further independent route.
"""

from dataclasses import dataclass

import numpy as np

from .costs import QuarticCost
from .dynamics import SystemState
from .errors import BracketError
from .network import NetworkModel


@dataclass(frozen=True)
class SteadyStateSolution:
    """Optimal steady state for a given disturbance."""

    u: np.ndarray  # (n,) injections
    theta: np.ndarray  # (m,) line angle differences
    omega: np.ndarray  # (n,) zeros
    lam: np.ndarray  # (n,) multiplier, in span{1}
    mu: float  # common marginal cost
    objective: float  # total cost at the optimum

    def as_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "theta": self.theta.tolist(),
            "omega": self.omega.tolist(),
            "lam": self.lam.tolist(),
            "mu": self.mu,
            "objective": self.objective,
        }


def _grad_inverse(cost: QuarticCost, mu: float, tol: float) -> np.ndarray:
    """Vectorized inverse of the marginal cost at a common price mu."""
    n = cost.n
    lo = np.full(n, -1.0)
    hi = np.full(n, 1.0)
    for _ in range(200):
        bad = cost.grad(hi) < mu
        if not bad.any():
            break
        hi[bad] *= 2.0
    else:
        raise BracketError("marginal-cost inverse: upper bracket not found")
    for _ in range(200):
        bad = cost.grad(lo) > mu
        if not bad.any():
            break
        lo[bad] *= 2.0
    else:
        raise BracketError("marginal-cost inverse: lower bracket not found")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        high = cost.grad(mid) > mu
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def solve_steady_state(
    model: NetworkModel, cost: QuarticCost, p, tol: float = 1e-10
) -> SteadyStateSolution:
    """Scalar bisection on the marginal price, then an angle solve."""
    p = np.asarray(p, dtype=float)
    total = float(p.sum())
    inner_tol = min(tol, 1e-12)

    def imbalance(mu: float) -> float:
        return float(_grad_inverse(cost, mu, inner_tol).sum() - total)

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if imbalance(lo) <= 0.0:
            break
        lo *= 2.0
    else:
        raise BracketError("price bisection: lower bracket not found")
    for _ in range(200):
        if imbalance(hi) >= 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError("price bisection: upper bracket not found")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if imbalance(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < inner_tol:
            break
    mu = 0.5 * (lo + hi)
    u = _grad_inverse(cost, mu, inner_tol)
    # Ground bus 1 and solve the reduced Laplacian system for bus angles.
    L = model.laplacian()
    rhs = u - p
    angles = np.zeros(model.n)
    if model.n > 1:
        angles[1:] = np.linalg.solve(L[1:, 1:], rhs[1:])
    theta = model.C.T @ angles
    lam = -cost.grad(u)
    return SteadyStateSolution(
        u=u,
        theta=theta,
        omega=np.zeros(model.n),
        lam=lam,
        mu=mu,
        objective=cost.total(u),
    )


@dataclass(frozen=True)
class UniquenessReport:
    """Multi-start descent evidence that the optimum is unique."""

    n_restarts: int
    n_converged: int
    u_dispersion: float  # max pairwise inf-distance between found optima
    lam_spread: float  # worst per-restart spread of multiplier components
    objective_spread: float

    def as_dict(self) -> dict:
        return dict(vars(self))


def verify_uniqueness(
    model: NetworkModel,
    cost: QuarticCost,
    p,
    n_restarts: int = 20,
    seed: int = 0,
    gtol: float = 1e-11,
    max_iter: int = 20000,
) -> UniquenessReport:
    """Projected gradient descent (Barzilai-Borwein steps) on the reduced
    problem min_theta F(p + L theta), from random starts."""
    p = np.asarray(p, dtype=float)
    L = model.laplacian()
    rng = np.random.default_rng(seed)
    found_u = []
    found_obj = []
    n_converged = 0
    for _ in range(n_restarts):
        th = rng.normal(0.0, 1.0, model.n)
        th -= th.mean()
        g = L @ cost.grad(p + L @ th)
        eta = 1.0 / (1.0 + np.linalg.norm(g))
        converged = False
        for _ in range(max_iter):
            if np.abs(g).max() <= gtol:
                converged = True
                break
            th_new = th - eta * g
            g_new = L @ cost.grad(p + L @ th_new)
            dth = th_new - th
            dg = g_new - g
            denom = float(dth @ dg)
            eta = float(dth @ dth) / denom if denom > 1e-300 else eta * 2.0
            th, g = th_new, g_new
        if converged:
            n_converged += 1
        found_u.append(p + L @ th)
        found_obj.append(cost.total(p + L @ th))
    disp = 0.0
    for a in range(len(found_u)):
        for b in range(a + 1, len(found_u)):
            disp = max(disp, float(np.abs(found_u[a] - found_u[b]).max()))
    lam_spread = 0.0
    for u in found_u:
        lam = -cost.grad(u)
        lam_spread = max(lam_spread, float(np.abs(lam - lam.mean()).max()))
    return UniquenessReport(
        n_restarts=n_restarts,
        n_converged=n_converged,
        u_dispersion=disp,
        lam_spread=lam_spread,
        objective_spread=float(max(found_obj) - min(found_obj)),
    )


def equilibrium_from_oracle(
    model: NetworkModel, law, cost: QuarticCost, solution: SteadyStateSolution
) -> SystemState:
    """Map the optimal steady state to a closed-loop equilibrium.

    Inverts the control law per bus, copies the physical angles into the
    virtual ones, and reads the multiplier off stationarity at zero frequency
    deviation.
    """
    s = law.inverse(solution.u)
    lam = -cost.grad(law.value(s))
    return SystemState(
        theta=solution.theta.copy(),
        omega=np.zeros(model.n),
        s=s,
        lam=lam,
        phi=solution.theta.copy(),
    )
