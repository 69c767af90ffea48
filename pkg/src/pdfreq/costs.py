"""Per-bus strictly convex control costs.

The experimental family is quartic, ``F_i(u) = c_i u^4 / 4 + b_i`` with
``c_i > 0``, which is strictly convex, twice continuously differentiable, and
has zero gradient at ``u = 0`` (zero injection is the cheapest operating
point).  Gradient and Hessian are exposed because the training pass
differentiates through them.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuarticCost:
    """F_i(u) = c_i/4 u^4 + b_i, elementwise over buses."""

    c: np.ndarray  # (n,) > 0
    b: np.ndarray  # (n,)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if c.shape != b.shape or c.ndim != 1:
            raise ValueError("c and b must be 1-d arrays of equal length")
        if np.any(c <= 0):
            raise ValueError("all c coefficients must be positive")
        c.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def value(self, u: np.ndarray) -> np.ndarray:
        """Per-bus cost F_i(u_i)."""
        u = np.asarray(u, dtype=float)
        return 0.25 * self.c * u**4 + self.b

    def grad(self, u: np.ndarray) -> np.ndarray:
        """Marginal cost dF_i/du = c_i u^3; zero at the origin."""
        u = np.asarray(u, dtype=float)
        return self.c * u**3

    def hess(self, u: np.ndarray) -> np.ndarray:
        """Second derivative 3 c_i u^2 (nonnegative, zero only at u = 0)."""
        u = np.asarray(u, dtype=float)
        return 3.0 * self.c * u**2

    def total(self, u: np.ndarray) -> float:
        """Aggregate cost sum_i F_i(u_i)."""
        return float(self.value(u).sum())


# Draws below this are clamped up: a near-flat cost makes marginal-cost
# equalization numerically ill-conditioned.
C_FLOOR = 0.05


def random_quartic(n: int, seed: int, c_floor: float = C_FLOOR) -> QuarticCost:
    """Coefficients c, b ~ U(0, 1) with c clamped to at least ``c_floor``."""
    rng = np.random.default_rng(seed)
    c = np.maximum(rng.uniform(0.0, 1.0, n), c_floor)
    b = rng.uniform(0.0, 1.0, n)
    return QuarticCost(c=c, b=b)
