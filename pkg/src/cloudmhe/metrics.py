"""Estimate-quality metrics and plot-ready data artifacts.

Quantifies how well the estimator tracks the truth: per-state RMSE,
RMSE over the unmeasured displacement states, convergence times, solver
iteration statistics and (for networked runs) estimate staleness.  Also
emits gnuplot-compatible .dat files pairing truth and estimate for the
states of interest.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .suspension import N_STATES, POSITION_STATES

_STATE_NAMES = [f"x{i + 1}" for i in range(N_STATES)]

__all__ = ["MetricsReport", "compute_metrics", "write_metrics_json",
           "write_fig_data", "load_truth_csv", "load_estimates_csv"]


@dataclass
class MetricsReport:
    rmse: dict
    rmse_unmeasured: dict
    convergence_time: dict
    window: tuple
    qp_iterations: dict | None = None
    staleness: dict | None = None
    smoothness: dict | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "rmse": self.rmse,
            "rmse_unmeasured": self.rmse_unmeasured,
            "convergence_time": self.convergence_time,
            "window": list(self.window),
        }
        if self.qp_iterations is not None:
            out["qp_iterations"] = self.qp_iterations
        if self.staleness is not None:
            out["staleness"] = self.staleness
        if self.smoothness is not None:
            out["smoothness"] = self.smoothness
        out.update(self.extras)
        return out


def _rmse(err):
    return float(np.sqrt(np.mean(err**2)))


def _convergence_time(times, err, threshold):
    """First time after which the error never exceeds the threshold."""
    if threshold <= 0:
        return 0.0 if np.all(err == 0) else None
    above = np.flatnonzero(err > threshold)
    if above.size == 0:
        return float(times[0])
    if above[-1] == len(times) - 1:
        return None  # never settles
    return float(times[above[-1] + 1])


def compute_metrics(times, truth, estimates, t_start=0.0,
                    convergence_fraction=0.1, qp_iterations=None,
                    staleness=None) -> MetricsReport:
    """Score an estimate run against the truth on a shared time grid.

    RMSE is taken over t >= t_start; convergence time is the first time
    after which each state's error stays below ``convergence_fraction``
    of its initial error.
    """
    times = np.asarray(times, dtype=float)
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if truth.shape != estimates.shape or truth.shape[0] != times.size:
        raise ValueError("truth and estimates must share the time grid")

    err = np.abs(estimates - truth)
    mask = times >= t_start
    if not mask.any():
        raise ValueError(f"no samples at or after t_start={t_start}")

    n = truth.shape[1]
    names = _STATE_NAMES[:n] if n <= N_STATES else [f"x{i+1}" for i in range(n)]
    rmse = {names[i]: _rmse(err[mask, i]) for i in range(n)}
    unmeasured = [i for i in POSITION_STATES if i < n]
    rmse_unmeasured = {names[i]: rmse[names[i]] for i in unmeasured}
    rmse_unmeasured["mean"] = float(np.mean([rmse[names[i]] for i in unmeasured])) \
        if unmeasured else 0.0

    convergence = {}
    for i in unmeasured:
        threshold = convergence_fraction * err[0, i]
        convergence[names[i]] = _convergence_time(times, err[:, i], threshold)

    qp_stats = None
    if qp_iterations is not None:
        iters = np.asarray(qp_iterations, dtype=float)
        qp_stats = {"mean": float(iters.mean()), "max": int(iters.max()),
                    "median": float(np.median(iters))}

    staleness_stats = None
    if staleness is not None:
        vals = np.asarray(staleness, dtype=float)
        missing = int(np.sum(~np.isfinite(vals)))
        present = vals[np.isfinite(vals)]
        staleness_stats = {
            "count": int(vals.size),
            "missing": missing,
            "mean": float(present.mean()) if present.size else None,
            "median": float(np.median(present)) if present.size else None,
            "max": float(present.max()) if present.size else None,
        }

    smoothness = None
    if n >= N_STATES:
        dz = float(np.max(np.abs(np.diff(truth[:, 8]))))
        dq = max(float(np.max(np.abs(np.diff(truth[:, i])))) for i in (0, 2, 4, 6))
        smoothness = {"max_step_heave": dz, "max_step_wheel": dq}

    return MetricsReport(rmse=rmse, rmse_unmeasured=rmse_unmeasured,
                         convergence_time=convergence,
                         window=(float(times[mask][0]), float(times[-1])),
                         qp_iterations=qp_stats, staleness=staleness_stats,
                         smoothness=smoothness)


def write_metrics_json(path, report: MetricsReport):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


_FIG_FILES = (
    ("unsprung_front.dat", ((0, "q1"), (2, "q2"))),
    ("unsprung_rear.dat", ((4, "q3"), (6, "q4"))),
    ("heave.dat", ((8, "z"),)),
    ("attitude.dat", ((10, "theta"), (12, "phi"))),
)


def write_fig_data(outdir, times, truth, estimates):
    """Truth/estimate column pairs for the displacement states.

    One whitespace-separated .dat file per figure-worthy state group,
    directly loadable by gnuplot.
    """
    times = np.asarray(times, dtype=float)
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    os.makedirs(outdir, exist_ok=True)
    written = []
    for filename, columns in _FIG_FILES:
        path = os.path.join(outdir, filename)
        header = ["t"]
        for _, label in columns:
            header += [f"{label}_true", f"{label}_est"]
        with open(path, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for p in range(times.size):
                cells = [repr(float(times[p]))]
                for idx, _ in columns:
                    cells.append(repr(float(truth[p, idx])))
                    cells.append(repr(float(estimates[p, idx])))
                fh.write(" ".join(cells) + "\n")
        written.append(path)
    return written


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def load_truth_csv(path):
    """Read a truth artifact back: (times, states) plus the full table."""
    header, rows = _read_csv(path)
    expected = ["t"] + _STATE_NAMES
    if header[:len(expected)] != expected:
        raise ValueError(f"{path}: unexpected truth columns {header[:5]}...")
    data = np.array([[float(c) for c in row] for row in rows])
    return data[:, 0], data[:, 1:1 + N_STATES], header, data


def load_estimates_csv(path):
    """Read an estimates artifact back: (times, estimates, iters, status)."""
    header, rows = _read_csv(path)
    expected = ["t"] + [f"xhat{i + 1}" for i in range(N_STATES)] + ["qp_iters", "qp_status"]
    if header != expected:
        raise ValueError(f"{path}: unexpected estimate columns")
    times = np.array([float(r[0]) for r in rows])
    estimates = np.array([[float(c) for c in r[1:1 + N_STATES]] for r in rows])
    iters = np.array([int(r[1 + N_STATES]) for r in rows])
    status = [r[2 + N_STATES] for r in rows]
    return times, estimates, iters, status
