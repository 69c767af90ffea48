"""Scenario files: network + cost + disturbance + controller + horizon.

Schema (JSON)::

    {
      "network": "ieee39" | "toy3" | "<path>",
      "cost": {"type": "quartic", "c": [...], "b": [...]}
              | {"type": "quartic", "seed": 0},
      "disturbance": {"bus": {"14": 3.0, ...}}
                     | {"random": {"low": -5, "high": 5, "seed": 1}},
      "controller": {"type": "linear", "gain": 1.0}
                    | {"type": "monotone_net", "checkpoint": "<path>"},
      "gains": {"lambda": <scalar or per-bus list>,
                "phi": <scalar or per-edge list>},
      "p_mode": "known" | "estimated",
      "T": 60.0,
      "h": 0.01,
      "metrics": {"alpha": 3.0, "rho_r": 0.1, "rho_n": 1.0, "rho_c": 1.0,
                  "settle_band": 0.005}
    }

Builtin network names resolve to bundled data files; relative paths resolve
against the scenario file's directory.  Bus numbers in disturbance maps are
1-based, matching network files.
"""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .controller import ControllerGains, PiecewiseLinearLaw, law_from_params, linear_law
from .costs import QuarticCost, random_quartic
from .errors import ConfigError
from .metrics import MetricConfig
from .monotone import load_checkpoint
from .network import NetworkModel, load_network, network_from_dict

BUILTIN_NETWORKS = ("ieee39", "toy3")
BUILTIN_SCENARIOS = ("ieee39_step", "toy3_step")


@dataclass
class Scenario:
    name: str
    model: NetworkModel
    cost: QuarticCost
    p: np.ndarray
    law: PiecewiseLinearLaw
    gains: ControllerGains
    T: float
    h: float
    p_mode: str
    metrics: MetricConfig


def _load_builtin(filename: str) -> dict:
    with resources.files("pdfreq.data").joinpath(filename).open() as fh:
        return json.load(fh)


def load_builtin_network(name: str) -> NetworkModel:
    return network_from_dict(_load_builtin(f"{name}.json"), origin=name)


def _resolve_network(ref: str, base: Optional[Path]) -> NetworkModel:
    if ref in BUILTIN_NETWORKS:
        return load_builtin_network(ref)
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = base / path
    if not path.exists():
        raise ConfigError(f"network file not found: {path}")
    return load_network(path)


def _resolve_cost(spec: dict, n: int) -> QuarticCost:
    if spec.get("type", "quartic") != "quartic":
        raise ConfigError(f"unknown cost type {spec.get('type')!r}")
    if "c" in spec:
        cost = QuarticCost(c=np.asarray(spec["c"], float), b=np.asarray(spec.get("b", np.zeros(n)), float))
    elif "seed" in spec:
        cost = random_quartic(n, seed=int(spec["seed"]))
    else:
        raise ConfigError("cost needs either explicit 'c'/'b' arrays or a 'seed'")
    if cost.n != n:
        raise ConfigError(f"cost has {cost.n} buses, network has {n}")
    return cost


def _resolve_disturbance(spec: dict, n: int) -> np.ndarray:
    p = np.zeros(n)
    if "bus" in spec:
        for bus, val in spec["bus"].items():
            idx = int(bus)
            if not (1 <= idx <= n):
                raise ConfigError(f"disturbance bus {idx} outside 1..{n}")
            p[idx - 1] = float(val)
        return p
    if "random" in spec:
        r = spec["random"]
        rng = np.random.default_rng(int(r.get("seed", 0)))
        return rng.uniform(float(r["low"]), float(r["high"]), n)
    raise ConfigError("disturbance needs a 'bus' map or a 'random' spec")


def _resolve_controller(spec: dict, n: int, base: Optional[Path]) -> PiecewiseLinearLaw:
    kind = spec.get("type", "linear")
    if kind == "linear":
        return linear_law(n, float(spec.get("gain", 1.0)))
    if kind == "monotone_net":
        if "checkpoint" not in spec:
            raise ConfigError("monotone_net controller needs a 'checkpoint' path")
        path = Path(spec["checkpoint"])
        if not path.is_absolute() and base is not None:
            path = base / path
        if not path.exists():
            raise ConfigError(f"checkpoint file not found: {path}")
        params = load_checkpoint(path)
        if params.n != n:
            raise ConfigError(f"checkpoint has {params.n} buses, network has {n}")
        return law_from_params(params)
    raise ConfigError(f"unknown controller type {kind!r}")


def scenario_from_dict(raw: dict, name: str = "<dict>", base: Optional[Path] = None) -> Scenario:
    for key in ("network", "disturbance"):
        if key not in raw:
            raise ConfigError(f"scenario {name}: missing key {key!r}")
    model = _resolve_network(raw["network"], base)
    cost = _resolve_cost(raw.get("cost", {"seed": 0}), model.n)
    p = _resolve_disturbance(raw["disturbance"], model.n)
    law = _resolve_controller(raw.get("controller", {"type": "linear"}), model.n, base)
    gspec = raw.get("gains", {})
    gains = ControllerGains.for_model(
        model,
        gamma_lam=np.asarray(gspec.get("lambda", 1.0), float),
        gamma_phi=np.asarray(gspec.get("phi", 1.0), float),
    )
    mspec = raw.get("metrics", {})
    metrics = MetricConfig(
        alpha=float(mspec.get("alpha", 3.0)),
        rho_r=float(mspec.get("rho_r", 0.1)),
        rho_n=float(mspec.get("rho_n", 1.0)),
        rho_c=float(mspec.get("rho_c", 1.0)),
        settle_band=float(mspec.get("settle_band", 5e-3)),
    )
    p_mode = raw.get("p_mode", "known")
    if p_mode not in ("known", "estimated"):
        raise ConfigError(f"unknown p_mode {p_mode!r}")
    return Scenario(
        name=name,
        model=model,
        cost=cost,
        p=p,
        law=law,
        gains=gains,
        T=float(raw.get("T", 60.0)),
        h=float(raw.get("h", 0.01)),
        p_mode=p_mode,
        metrics=metrics,
    )


def load_scenario(ref) -> Scenario:
    """Load a scenario by bundled name or file path."""
    if isinstance(ref, str) and ref in BUILTIN_SCENARIOS:
        return scenario_from_dict(_load_builtin(f"scenario_{ref}.json"), name=ref)
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(raw, name=str(path), base=path.parent)
