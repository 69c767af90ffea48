"""Learning-augmented primal-dual secondary frequency control laboratory.

Simulates linearized swing dynamics in closed loop with a primal-dual
controller whose change of variables u = f(s) is a strictly increasing
piecewise-linear map, trains that map by backpropagation through the unrolled
dynamics, and verifies steady-state optimality and stability numerically
against an independent convex solver.
"""

from .backend import active_backend
from .controller import ControllerGains, PiecewiseLinearLaw, linear_law, law_from_params
from .costs import QuarticCost, random_quartic
from .dynamics import SystemState, Trajectory, simulate, equilibrium_residuals
from .metrics import MetricConfig, TransientReport, transient_report
from .monotone import MonotoneParams, init_params, load_checkpoint, save_checkpoint
from .network import NetworkModel, ieee39, load_network
from .oracle import SteadyStateSolution, solve_steady_state, verify_uniqueness
from .training import TrainConfig, TrainResult, gradient_check, train

__version__ = "0.1.0"

__all__ = [
    "ControllerGains",
    "MetricConfig",
    "MonotoneParams",
    "NetworkModel",
    "PiecewiseLinearLaw",
    "QuarticCost",
    "SteadyStateSolution",
    "SystemState",
    "Trajectory",
    "TrainConfig",
    "TrainResult",
    "TransientReport",
    "active_backend",
    "equilibrium_residuals",
    "gradient_check",
    "ieee39",
    "init_params",
    "law_from_params",
    "linear_law",
    "load_checkpoint",
    "load_network",
    "random_quartic",
    "save_checkpoint",
    "simulate",
    "solve_steady_state",
    "train",
    "transient_report",
    "verify_uniqueness",
]
