"""Command-line entry point.

Subcommands:

    simulate         roll a scenario forward, write trajectory + metrics CSVs
    train            fit the monotone control law, write checkpoint + loss CSV
    compare          learned vs linear baseline on one scenario, table CSV
    oracle           print the optimal steady state as JSON
    check-gradients  finite-difference audit of the training reverse pass

Exit codes: 0 success, 1 runtime/numeric failure, 2 configuration error.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .controller import law_from_params, linear_law
from .dynamics import SystemState, simulate
from .errors import ConfigError, DegenerateFitError, IntegrationBlowupError
from .metrics import (MetricConfig, envelope_fit, loss as metric_loss,
                      marginal_cost_spread, transient_report)
from .monotone import load_checkpoint, save_checkpoint
from .oracle import solve_steady_state
from .scenario import Scenario, load_scenario
from .training import TrainConfig, gradient_check, train

log = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4
SLOW_TRAIN_STEPS = 5_000_000


def _scenario_with_checkpoint(scenario: Scenario, checkpoint) -> Scenario:
    params = load_checkpoint(checkpoint)
    if params.n != scenario.model.n:
        raise ConfigError(
            f"checkpoint has {params.n} buses, scenario network has {scenario.model.n}"
        )
    scenario.law = law_from_params(params)
    return scenario


def _run_scenario(sc: Scenario, method: str = "euler"):
    return simulate(
        sc.model, sc.law, sc.gains, sc.cost, SystemState.zero(sc.model),
        sc.p, T=sc.T, h=sc.h, method=method, p_mode=sc.p_mode,
    )


def _write_metrics_csv(path, report, n):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "rate", "nadir", "avg_cost"])
        for i in range(n):
            w.writerow([i + 1, repr(float(report.rate[i])), repr(float(report.nadir[i])),
                        repr(float(report.avg_cost[i]))])
        w.writerow(["total", repr(float(report.rate.sum())),
                    repr(report.nadir_max), repr(report.cost_total)])


def _write_summary_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerow(["loss", repr(report.loss)])
        w.writerow(["settling_time", repr(report.settling_time)])
        if report.envelope is not None:
            w.writerow(["envelope_amplitude", repr(report.envelope[0])])
            w.writerow(["envelope_rate", repr(report.envelope[1])])


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.checkpoint:
        sc = _scenario_with_checkpoint(sc, args.checkpoint)
    traj = _run_scenario(sc, method=args.method)
    report = transient_report(traj, sc.cost, sc.metrics)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out / "trajectory.csv")
    _write_metrics_csv(out / "metrics.csv", report, sc.model.n)
    _write_summary_csv(out / "summary.csv", report)
    print(f"wrote {out / 'trajectory.csv'}, metrics.csv, summary.csv")
    print(f"loss={report.loss:.6g} settling={report.settling_time:.4g}s "
          f"nadir={report.nadir_max:.6g}")
    return 0


def cmd_train(args) -> int:
    if args.scenario:
        sc = load_scenario(args.scenario)
        model, cost = sc.model, sc.cost
        gamma_lam = tuple(sc.gains.gamma_lam)
        gamma_phi = tuple(sc.gains.gamma_phi)
        metrics = sc.metrics
        h = args.dt if args.dt is not None else sc.h
        horizon = args.horizon if args.horizon is not None else int(round(sc.T / h))
    else:
        if not args.network:
            raise ConfigError("train needs --scenario or --network")
        from .scenario import _resolve_network  # same resolution rules

        model = _resolve_network(args.network, Path.cwd())
        from .costs import random_quartic

        cost = random_quartic(model.n, seed=args.cost_seed)
        gamma_lam = args.gamma_lam
        gamma_phi = args.gamma_phi
        metrics = MetricConfig()
        h = args.dt if args.dt is not None else 0.01
        horizon = args.horizon if args.horizon is not None else 6000
    if args.alpha is not None or args.rho_r is not None or args.rho_n is not None \
            or args.rho_c is not None:
        metrics = MetricConfig(
            alpha=args.alpha if args.alpha is not None else metrics.alpha,
            rho_r=args.rho_r if args.rho_r is not None else metrics.rho_r,
            rho_n=args.rho_n if args.rho_n is not None else metrics.rho_n,
            rho_c=args.rho_c if args.rho_c is not None else metrics.rho_c,
            settle_band=metrics.settle_band,
        )
    p_low, p_high = args.p_low, args.p_high
    if args.scenario and p_low is None and p_high is None:
        # reuse the scenario's random-draw range when it has one
        raw = json.loads(Path(args.scenario).read_text()) if Path(args.scenario).exists() else None
        if raw is None:
            from .scenario import _load_builtin

            raw = _load_builtin(f"scenario_{args.scenario}.json")
        rand = raw.get("disturbance", {}).get("random")
        if rand:
            p_low, p_high = float(rand["low"]), float(rand["high"])
    cfg = TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        horizon_steps=horizon,
        h=h,
        lr=args.lr,
        decay=args.decay,
        decay_every=args.decay_every,
        p_low=p_low if p_low is not None else -5.0,
        p_high=p_high if p_high is not None else 5.0,
        seed=args.seed,
        clip_norm=args.clip,
        hidden=args.hidden,
        gamma_lam=gamma_lam,
        gamma_phi=gamma_phi,
        metrics=metrics,
    )
    total_steps = cfg.batch_size * cfg.epochs * cfg.horizon_steps
    if total_steps * model.n > SLOW_TRAIN_STEPS * 3:
        print(
            f"warning: {cfg.epochs} epochs x {cfg.batch_size} rollouts x "
            f"{cfg.horizon_steps} steps on {model.n} buses will take a while "
            "on CPU", file=sys.stderr,
        )
    result = train(model, cost, cfg)
    if args.checkpoint_out:
        save_checkpoint(result.params, args.checkpoint_out)
        print(f"wrote {args.checkpoint_out}")
    if args.loss_out:
        with open(args.loss_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            for e, val in enumerate(result.history):
                w.writerow([e, repr(float(val))])
        print(f"wrote {args.loss_out}")
    print(f"final loss {result.history[-1]:.6g} "
          f"(from {result.history[0]:.6g}, {result.resamples} resamples)")
    return 0


def _compare_row(sc: Scenario, law, name, writer):
    traj = simulate(sc.model, law, sc.gains, sc.cost, SystemState.zero(sc.model),
                    sc.p, T=sc.T, h=sc.h)
    report = transient_report(traj, sc.cost, sc.metrics)
    spread = marginal_cost_spread(traj.final_state(), law, sc.cost)
    rate = report.envelope[1] if report.envelope else float("nan")
    writer.writerow([
        name, repr(float(report.settling_time)), repr(float(report.nadir_max)),
        repr(float(report.cost_total)), repr(float(rate)), repr(float(spread)),
        repr(float(report.loss)),
    ])


def cmd_compare(args) -> int:
    sc = load_scenario(args.scenario)
    learned = law_from_params(load_checkpoint(args.checkpoint))
    if learned.n != sc.model.n:
        raise ConfigError(
            f"checkpoint has {learned.n} buses, scenario network has {sc.model.n}"
        )
    baseline = linear_law(sc.model.n, args.baseline_gain)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "settling_time", "nadir", "total_avg_cost",
                    "envelope_rate", "marginal_cost_spread", "loss"])
        _compare_row(sc, learned, "learned", w)
        _compare_row(sc, baseline, "linear", w)
    print(f"wrote {args.out}")
    return 0


def cmd_oracle(args) -> int:
    sc = load_scenario(args.scenario)
    sol = solve_steady_state(sc.model, sc.cost, sc.p)
    print(json.dumps(sol.as_dict(), indent=1))
    return 0


def cmd_check_gradients(args) -> int:
    err = gradient_check(seed=args.seed)
    print(f"max relative error over all parameters: {err:.3e}")
    if err > GRADIENT_TOLERANCE:
        print(f"FAIL (tolerance {GRADIENT_TOLERANCE:g})", file=sys.stderr)
        return 1
    print(f"OK (tolerance {GRADIENT_TOLERANCE:g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdfreq", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="roll a scenario forward")
    sim.add_argument("--scenario", required=True,
                     help="scenario file or builtin name (ieee39_step, toy3_step)")
    sim.add_argument("--out-dir", required=True)
    sim.add_argument("--checkpoint", help="override the controller with a trained law")
    sim.add_argument("--method", choices=("euler", "rk4"), default="euler")
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("train", help="train the monotone control law")
    tr.add_argument("--scenario", help="take network/cost/gains from a scenario")
    tr.add_argument("--network", help="network file or builtin name")
    tr.add_argument("--cost-seed", type=int, default=0)
    tr.add_argument("--batch", type=int, default=64)
    tr.add_argument("--epochs", type=int, default=50)
    tr.add_argument("--horizon", type=int, default=None, help="steps per rollout")
    tr.add_argument("--dt", type=float, default=None)
    tr.add_argument("--alpha", type=float, default=None)
    tr.add_argument("--rho-r", type=float, default=None)
    tr.add_argument("--rho-n", type=float, default=None)
    tr.add_argument("--rho-c", type=float, default=None)
    tr.add_argument("--lr", type=float, default=0.4)
    tr.add_argument("--decay", type=float, default=0.5)
    tr.add_argument("--decay-every", type=int, default=3)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--clip", type=float, default=10.0)
    tr.add_argument("--hidden", type=int, default=20)
    tr.add_argument("--p-low", type=float, default=None)
    tr.add_argument("--p-high", type=float, default=None)
    tr.add_argument("--gamma-lam", type=float, default=1.0)
    tr.add_argument("--gamma-phi", type=float, default=1.0)
    tr.add_argument("--checkpoint-out")
    tr.add_argument("--loss-out")
    tr.set_defaults(func=cmd_train)

    cp = sub.add_parser("compare", help="learned vs linear on one scenario")
    cp.add_argument("--scenario", required=True)
    cp.add_argument("--checkpoint", required=True)
    cp.add_argument("--baseline-gain", type=float, default=1.0)
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_compare)

    orc = sub.add_parser("oracle", help="print the optimal steady state")
    orc.add_argument("--scenario", required=True)
    orc.set_defaults(func=cmd_oracle)

    gc = sub.add_parser("check-gradients", help="finite-difference audit")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_check_gradients)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationBlowupError, OverflowError, DegenerateFitError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
