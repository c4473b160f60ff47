"""Batch front end: configuration loading, subcommands, report emission.

Subcommands: ``check`` (certificates; exit 0 only when all hold),
``simulate`` (ground-truth trajectory CSV), ``estimate`` (estimation
trajectory CSV), ``montecarlo`` (run summary JSON + RMSE CSV), and ``sweep``
(horizon table CSV). All numeric CSV output uses 17 significant digits, so
reruns with the same configuration and seed are byte-identical.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import benchmark_config, load_run_config
from .coordinator import run_trajectory
from .errors import EstimationError
from .evaluation import (condition_report, horizon_sweep, monte_carlo,
                         noise_sweep, timing_report)
from .simulator import simulate

_FMT = ".17g"


def _fmt(value):
    return format(float(value), _FMT)


def _write_csv(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)


def _load(args):
    if args.config is not None:
        config = load_run_config(args.config)
    else:
        config = benchmark_config()
    return config.with_overrides(
        mode=args.mode, horizon=args.horizon, iterations=args.iters,
        seed=args.seed, runs=getattr(args, "runs", None),
        timed=(True if getattr(args, "timed", False) else None),
        output_dir=args.out)


def cmd_check(args):
    config = _load(args)
    report = condition_report(config.derived())
    print(report.format_table())
    out = Path(config.output_dir)
    _write_csv(out / "conditions.csv", report.to_csv_rows())
    (out / "conditions.json").write_text(report.to_json(), encoding="utf-8")
    return 0 if report.all_satisfied else 1


def cmd_simulate(args):
    config = _load(args)
    sim = simulate(config.model, config.initial_state, None, config.noise,
                   config.samples)
    rows = [("k", "component", "truth", "measurement")]
    for k in range(sim.states.shape[0]):
        for c in range(config.model.n_states):
            rows.append((str(k), f"x{c}", _fmt(sim.states[k, c]), ""))
        for c in range(config.model.n_outputs):
            rows.append((str(k), f"y{c}", "", _fmt(sim.outputs[k, c])))
    _write_csv(Path(config.output_dir) / "simulation.csv", rows)
    print(f"simulated {sim.states.shape[0]} samples -> "
          f"{Path(config.output_dir) / 'simulation.csv'}")
    return 0


def cmd_estimate(args):
    config = _load(args)
    derived = config.derived()
    sim = simulate(config.model, config.initial_state, None, config.noise,
                   config.samples)
    records = run_trajectory(sim.outputs, None, config.schedule, derived,
                             config.initial_guess, boxes=config.boxes)
    p = config.model.partition
    bundle = config.bundle
    rows = [("k", "subsystem", "component", "prior", "estimate", "truth")]
    for record in records:
        truth_full = sim.states[record.k - config.schedule.horizon]
        if bundle is not None:
            truth_phys = bundle.to_physical(truth_full)
        for i in p.ids:
            sl = p.state_slice(i)
            est = record.estimates[i]
            prior = record.priors[i]
            if bundle is not None:
                full_est = np.zeros(config.model.n_states)
                full_prior = np.zeros(config.model.n_states)
                full_est[sl] = est
                full_prior[sl] = prior
                est_out = bundle.to_physical(full_est)[sl]
                prior_out = bundle.to_physical(full_prior)[sl]
                truth_out = truth_phys[sl]
            else:
                est_out, prior_out, truth_out = est, prior, truth_full[sl]
            for c in range(p.state_sizes[i]):
                rows.append((str(record.k), str(i), str(c),
                             _fmt(prior_out[c]), _fmt(est_out[c]),
                             _fmt(truth_out[c])))
    _write_csv(Path(config.output_dir) / "trajectory.csv", rows)
    print(f"estimated {len(records)} instants ({config.schedule.mode}, "
          f"N={config.schedule.horizon}) -> "
          f"{Path(config.output_dir) / 'trajectory.csv'}")
    return 0


def cmd_montecarlo(args):
    config = _load(args)
    summary = monte_carlo(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2), encoding="utf-8")
    rows = [("instant", "rmse_scaled", "rmse_physical")]
    for idx in range(summary.rmse_trajectory_scaled.shape[0]):
        rows.append((str(idx),
                     _fmt(summary.rmse_trajectory_scaled[idx]),
                     _fmt(summary.rmse_trajectory_physical[idx])))
    _write_csv(out / "rmse_vs_k.csv", rows)
    if config.timed:
        _write_csv(out / "timing.csv", timing_report(config).rows())
    print(f"{summary.runs} runs, time-mean RMSE scaled="
          f"{summary.time_mean_rmse_scaled:.6g} physical="
          f"{summary.time_mean_rmse_physical:.6g} -> {out / 'summary.json'}")
    return 0


def cmd_sweep(args):
    config = _load(args)
    summaries = horizon_sweep(config)
    rows = [("horizon", "runs", "time_mean_rmse_scaled", "time_mean_rmse_physical")]
    for summary in summaries:
        rows.append((str(summary.horizon), str(summary.runs),
                     _fmt(summary.time_mean_rmse_scaled),
                     _fmt(summary.time_mean_rmse_physical)))
    out = Path(config.output_dir)
    _write_csv(out / "horizon_table.csv", rows)
    for row in rows:
        print(",".join(row))
    if config.sigma_sweep:
        sigma_rows = [("sigma_w", "runs", "time_mean_rmse_scaled",
                       "time_mean_rmse_physical")]
        for sigma, summary in noise_sweep(config):
            sigma_rows.append((_fmt(sigma), str(summary.runs),
                               _fmt(summary.time_mean_rmse_scaled),
                               _fmt(summary.time_mean_rmse_physical)))
        _write_csv(out / "rmse_vs_sigma.csv", sigma_rows)
        print(f"sigma sweep -> {out / 'rmse_vs_sigma.csv'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dmhe",
        description="Partition-based distributed moving-horizon estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in (("check", cmd_check), ("simulate", cmd_simulate),
                          ("estimate", cmd_estimate),
                          ("montecarlo", cmd_montecarlo), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="JSON run configuration (default: bundled benchmark)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--mode", type=str, default=None,
                       choices=["dmhe1", "dmhe2", "cmhe-reference"])
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--iters", type=int, default=None,
                       help="rounds per sampling instant")
        p.add_argument("--out", type=str, default=None, help="output directory")
        if name in ("montecarlo", "sweep"):
            p.add_argument("--runs", type=int, default=None)
        if name == "montecarlo":
            p.add_argument("--timed", action="store_true")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
