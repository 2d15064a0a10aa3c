"""Command line entry points.

Subcommands: simulate, serve-cloud, run-vehicle, metrics, dump-model,
solve-qp.  Exit codes: 0 success, 2 configuration/input error,
3 numerical failure, 4 connection refused, 5 mid-session loss.
Set MHE_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, paper_scenario_path
from .discretize import zoh
from .metrics import (compute_metrics, load_estimates_csv, load_truth_csv,
                      write_fig_data, write_metrics_json)
from .mhe import MovingHorizonEstimator, write_estimates_csv
from .qp import problem_from_dict, solve_qp
from .simulate import run_plant, write_trajectory_csv
from .suspension import build_model
from .v2c2v import (ConnectionFailed, SessionLost, run_session, run_vehicle,
                    serve_cloud, write_session_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CONNECT = 4
EXIT_SESSION = 5

log = logging.getLogger("cloudmhe")


def _load_config(args) -> RunConfig:
    path = args.config if args.config else paper_scenario_path()
    config = RunConfig.from_file(path)
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config, sim=dataclasses.replace(config.sim, seed=args.seed))
    if getattr(args, "out", None):
        config = dataclasses.replace(config, output_dir=args.out)
    return config


def _build(config: RunConfig):
    model = build_model(config.params)
    discrete = zoh(model, config.sim.ts)
    estimator = MovingHorizonEstimator(discrete=discrete, c=model.c,
                                       config=config.mhe)
    return model, discrete, estimator


def _address(text):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _write_matrix_csv(path, matrix):
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def cmd_simulate(args) -> int:
    config = _load_config(args)
    model, discrete, estimator = _build(config)
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    try:
        trajectory = run_plant(model, discrete, config.road, config.sim)
        estimates = estimator.filter(trajectory.measurements,
                                     us=trajectory.inputs, roads=trajectory.roads)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_trajectory_csv(os.path.join(outdir, "truth.csv"), trajectory)
    write_estimates_csv(os.path.join(outdir, "estimates.csv"), estimator.records_)
    report = compute_metrics(
        trajectory.times, trajectory.states, estimates,
        qp_iterations=[r.qp_iterations for r in estimator.records_])
    write_metrics_json(os.path.join(outdir, "metrics.json"), report)
    log.info("simulate: %d steps -> %s", len(trajectory) - 1, outdir)
    print(f"simulate: wrote truth.csv, estimates.csv, metrics.json to {outdir} "
          f"(unmeasured RMSE mean {report.rmse_unmeasured['mean']:.3e})")
    return EXIT_OK


def cmd_serve_cloud(args) -> int:
    config = _load_config(args)
    _, _, estimator = _build(config)
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    try:
        rows, records, counters = serve_cloud(args.listen, config.road, estimator,
                                              channel_config=config.channel,
                                              accept_timeout=args.timeout)
    except ConnectionFailed as exc:
        print(f"connection failed: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except SessionLost as exc:
        print(f"session lost: {exc}", file=sys.stderr)
        return EXIT_SESSION
    if records:
        write_estimates_csv(os.path.join(outdir, "estimates.csv"), records)
    write_session_csv(os.path.join(outdir, "session_cloud.csv"), rows)
    print(f"serve-cloud: processed {len(rows)} measurements "
          f"({counters['out_of_order']} out-of-order, "
          f"{counters['decode_errors']} undecodable); artifacts in {outdir}")
    return EXIT_OK


def cmd_run_vehicle(args) -> int:
    config = _load_config(args)
    model, discrete, _ = _build(config)
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    try:
        result = run_vehicle(args.connect, model, discrete, config.road, config.sim,
                             channel_config=config.channel,
                             gps_err_std=config.gps_err_std,
                             reply_timeout=args.timeout)
    except ConnectionFailed as exc:
        print(f"connection failed: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except SessionLost as exc:
        if exc.result is not None:
            write_trajectory_csv(os.path.join(outdir, "truth.csv"),
                                 exc.result.trajectory)
            write_session_csv(os.path.join(outdir, "session_vehicle.csv"),
                              exc.result.vehicle_rows)
        print(f"session lost: {exc}", file=sys.stderr)
        return EXIT_SESSION
    write_trajectory_csv(os.path.join(outdir, "truth.csv"), result.trajectory)
    write_session_csv(os.path.join(outdir, "session_vehicle.csv"), result.vehicle_rows)
    print(f"run-vehicle: {len(result.estimates)}/{len(result.vehicle_rows)} estimates "
          f"received; artifacts in {outdir}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        t_truth, truth, _, _ = load_truth_csv(args.truth)
        t_est, estimates, iters, _ = load_estimates_csv(args.estimates)
    except (OSError, ValueError) as exc:
        print(f"cannot read inputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if t_truth.size != t_est.size or np.max(np.abs(t_truth - t_est)) > 1e-9:
        print("timestamp columns are misaligned", file=sys.stderr)
        return EXIT_CONFIG
    staleness = None
    if args.session:
        rows = np.genfromtxt(args.session, delimiter=",", names=True)
        staleness = np.atleast_1d(rows["staleness"])
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    report = compute_metrics(t_truth, truth, estimates, t_start=args.t_start,
                             convergence_fraction=args.convergence_fraction,
                             qp_iterations=iters, staleness=staleness)
    write_metrics_json(os.path.join(outdir, "metrics.json"), report)
    written = write_fig_data(outdir, t_truth, truth, estimates)
    print(f"metrics: wrote metrics.json and {len(written)} .dat files to {outdir}")
    return EXIT_OK


def cmd_dump_model(args) -> int:
    config = _load_config(args)
    model = build_model(config.params)
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    for name, matrix in (("a", model.a), ("b", model.b),
                         ("br", model.br), ("c", model.c)):
        _write_matrix_csv(os.path.join(outdir, f"{name}.csv"), matrix)
    print(f"dump-model: wrote a.csv, b.csv, br.csv, c.csv to {outdir}")
    return EXIT_OK


def cmd_solve_qp(args) -> int:
    try:
        with open(args.problem) as fh:
            data = json.load(fh)
        problem = problem_from_dict(data)
    except (OSError, ValueError) as exc:
        print(f"cannot load problem: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    solution = solve_qp(problem, tol=args.tol, max_iter=args.max_iter)
    print(f"status: {solution.status}")
    print(f"iterations: {solution.iterations}")
    print(f"objective: {solution.objective!r}")
    print(f"stationarity: {solution.stationarity:.3e}")
    print(f"primal: {solution.primal:.3e}")
    print(f"complementarity: {solution.complementarity:.3e}")
    print("z: " + " ".join(repr(float(v)) for v in solution.z))
    return EXIT_OK if solution.solved else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudmhe",
        description="Full-car suspension state estimation with moving horizon "
                    "optimization, runnable in-process or split across a "
                    "vehicle/cloud socket pair.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seed=True):
        p.add_argument("--config", help="JSON config path (default: bundled scenario)")
        p.add_argument("--out", help="artifact directory (overrides config)")
        if seed:
            p.add_argument("--seed", type=int, help="override the simulation seed")

    p = sub.add_parser("simulate", help="run plant + estimator in-process")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve-cloud", help="run the cloud estimator node")
    add_common(p, seed=False)
    p.add_argument("--listen", type=_address, required=True, metavar="ADDR:PORT")
    p.add_argument("--timeout", type=float, default=30.0,
                   help="seconds to wait for the vehicle")
    p.set_defaults(func=cmd_serve_cloud)

    p = sub.add_parser("run-vehicle", help="run the vehicle node")
    add_common(p)
    p.add_argument("--connect", type=_address, required=True, metavar="ADDR:PORT")
    p.add_argument("--timeout", type=float, default=5.0,
                   help="seconds to wait for each estimate")
    p.set_defaults(func=cmd_run_vehicle)

    p = sub.add_parser("metrics", help="score an estimate run against the truth")
    p.add_argument("truth", help="truth.csv from simulate or run-vehicle")
    p.add_argument("estimates", help="estimates.csv from simulate or serve-cloud")
    p.add_argument("--session", help="optional session CSV for staleness stats")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--t-start", type=float, default=0.0,
                   help="score only from this time onward")
    p.add_argument("--convergence-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dump-model", help="write the model matrices as CSV")
    add_common(p, seed=False)
    p.set_defaults(func=cmd_dump_model)

    p = sub.add_parser("solve-qp", help="solve a QP bundle and print residuals")
    p.add_argument("problem", help="JSON file with h, f and optional g, lo, hi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20000)
    p.set_defaults(func=cmd_solve_qp)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MHE_LOG", "WARNING").upper(),
                        format="%(name)s %(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
