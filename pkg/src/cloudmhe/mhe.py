"""Constrained moving horizon estimation with a Kalman arrival cost.

Each step solves a quadratic program over the window-initial state and
the per-interval disturbance sequence.  In-window states are eliminated
through the dynamics (condensing), so the cost

    sum |w_p|^2_{Qinv} + sum |v_p|^2_{Rinv} + (x_start - xbar)' PIinv (x_start - xbar)

with v_p the measurement residual becomes an explicit PSD quadratic,
and the state / disturbance / residual boxes become affine row bounds.
While fewer than horizon+1 samples are buffered the same machinery
solves the growing-window (full-information) problem; once the window
is full, the oldest sample is folded into the arrival pair by one
Kalman step before being dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_vector, check_finite
from .discretize import DiscreteModel
from .kalman import ArrivalCost, kf_step
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "MheConfig",
    "CondensedWindow",
    "EstimateRecord",
    "condense_window",
    "MovingHorizonEstimator",
    "full_information_estimates",
    "write_estimates_csv",
    "FULL_INFORMATION_GUARD",
]

FULL_INFORMATION_GUARD = 50

# positions of the road-channel entries inside a full-car 14-entry diagonal
_ROAD_CHANNEL_SLOTS = (1, 3, 5, 7)


@dataclass
class MheConfig:
    """Estimator tuning: horizon, weights, prior, constraint boxes.

    ``q_diag`` is the disturbance covariance diagonal.  It may be given
    either on the disturbance channels directly or as a full-car 14-entry
    diagonal, from which the road-channel entries are extracted.
    ``None`` bounds mean unconstrained.
    """

    horizon: int = 10
    q_diag: tuple | None = None
    r_diag: tuple | None = None
    pi0_diag: tuple | None = None
    x0: tuple | None = None
    x_lo: tuple | None = None
    x_hi: tuple | None = None
    w_lo: tuple | None = None
    w_hi: tuple | None = None
    v_lo: tuple | None = None
    v_hi: tuple | None = None
    cov_reg: float = 1e-9
    qp_tol: float = 1e-8
    qp_max_iter: int = 20000

    def __post_init__(self):
        if not 1 <= int(self.horizon) <= 50:
            raise ValueError(f"horizon must be between 1 and 50, got {self.horizon}")
        for name in ("q_diag", "r_diag", "pi0_diag"):
            value = getattr(self, name)
            if value is not None and np.any(np.asarray(value, dtype=float) <= 0):
                raise ValueError(f"{name} entries must be strictly positive")
        if self.cov_reg < 0:
            raise ValueError("cov_reg must be non-negative")

    def disturbance_diag(self, nw):
        if self.q_diag is None:
            return np.ones(nw)
        arr = as_vector("q_diag", self.q_diag)
        if arr.size == nw:
            return arr
        if nw == len(_ROAD_CHANNEL_SLOTS) and arr.size == 14:
            return arr[list(_ROAD_CHANNEL_SLOTS)]
        raise ValueError(
            f"q_diag must have {nw} entries (or a 14-entry full-car diagonal), "
            f"got {arr.size}")

    def measurement_diag(self, ny):
        if self.r_diag is None:
            return np.ones(ny)
        return as_vector("r_diag", self.r_diag, ny)

    def prior(self, n) -> ArrivalCost:
        x0 = np.zeros(n) if self.x0 is None else as_vector("x0", self.x0, n)
        if self.pi0_diag is None:
            pi0 = np.ones(n)
        else:
            arr = as_vector("pi0_diag", self.pi0_diag)
            pi0 = np.full(n, arr[0]) if arr.size == 1 else as_vector("pi0_diag", arr, n)
        return ArrivalCost(xbar=x0, pi=np.diag(pi0))

    def _box(self, lo, hi, size, what):
        lo = np.full(size, -np.inf) if lo is None else as_vector(f"{what}_lo", lo, size)
        hi = np.full(size, np.inf) if hi is None else as_vector(f"{what}_hi", hi, size)
        if np.any(lo > hi):
            raise ValueError(f"{what} box has lo > hi")
        return lo, hi

    def state_box(self, n):
        return self._box(self.x_lo, self.x_hi, n, "x")

    def disturbance_box(self, nw):
        return self._box(self.w_lo, self.w_hi, nw, "w")

    def residual_box(self, ny):
        return self._box(self.v_lo, self.v_hi, ny, "v")


@dataclass
class CondensedWindow:
    """Affine maps from the decision vector back to the in-window states."""

    state_maps: np.ndarray   # (L+1, n, nz)
    offsets: np.ndarray      # (L+1, n)
    constant: float          # cost offset: J(z) = 0.5 z'Hz + f'z + constant

    def reconstruct(self, z):
        return self.state_maps @ z + self.offsets

    @property
    def intervals(self):
        return self.state_maps.shape[0] - 1


def condense_window(discrete: DiscreteModel, c, ys, us, rs,
                    arrival: ArrivalCost, config: MheConfig):
    """Reduce a window of samples to an explicit box-constrained QP.

    ``ys``/``us``/``rs`` hold one row per sample; with L+1 samples the
    decision vector is (window-initial state, L disturbance vectors).
    Returns the problem together with the maps needed to reconstruct the
    in-window state sequence from a solution.
    """
    ad, bd, brd = discrete.ad, discrete.bd, discrete.brd
    n = ad.shape[0]
    nw = brd.shape[1]
    c = np.atleast_2d(np.asarray(c, dtype=float))
    ny = c.shape[0]

    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    us = np.atleast_2d(np.asarray(us, dtype=float))
    rs = np.atleast_2d(np.asarray(rs, dtype=float))
    samples = ys.shape[0]
    if samples < 1:
        raise ValueError("window must hold at least one measurement")
    if us.shape[0] != samples or rs.shape[0] != samples:
        raise ValueError("window series must share one length")
    if arrival.dim != n:
        raise ValueError(f"arrival prior has dimension {arrival.dim}, model has {n}")
    intervals = samples - 1
    nz = n + nw * intervals

    q_inv = 1.0 / config.disturbance_diag(nw)
    r_inv = 1.0 / config.measurement_diag(ny)
    pi_inv = np.linalg.solve(arrival.pi, np.eye(n))
    pi_inv = 0.5 * (pi_inv + pi_inv.T)

    # forward elimination: x_p = state_maps[p] @ z + offsets[p]
    state_maps = np.zeros((samples, n, nz))
    offsets = np.zeros((samples, n))
    state_maps[0, :, :n] = np.eye(n)
    for p in range(intervals):
        state_maps[p + 1] = ad @ state_maps[p]
        state_maps[p + 1, :, n + nw * p:n + nw * (p + 1)] += brd
        offsets[p + 1] = ad @ offsets[p] + bd @ us[p] + brd @ rs[p]

    hhat = np.zeros((nz, nz))
    ghat = np.zeros(nz)
    constant = 0.0

    hhat[:n, :n] += pi_inv
    ghat[:n] += pi_inv @ arrival.xbar
    constant += float(arrival.xbar @ pi_inv @ arrival.xbar)

    meas_maps = np.empty((samples, ny, nz))
    meas_offsets = np.empty((samples, ny))
    for p in range(samples):
        m = c @ state_maps[p]
        e = ys[p] - c @ offsets[p]
        meas_maps[p] = m
        meas_offsets[p] = e
        hhat += m.T @ (r_inv[:, None] * m)
        ghat += m.T @ (r_inv * e)
        constant += float(e @ (r_inv * e))

    for p in range(intervals):
        block = slice(n + nw * p, n + nw * (p + 1))
        hhat[block, block] += np.diag(q_inv)

    # constraint rows, skipping anything unbounded on both sides
    x_lo, x_hi = config.state_box(n)
    w_lo, w_hi = config.disturbance_box(nw)
    v_lo, v_hi = config.residual_box(ny)

    rows, lows, highs = [], [], []
    x_mask = np.isfinite(x_lo) | np.isfinite(x_hi)
    if x_mask.any():
        for p in range(samples):
            rows.append(state_maps[p][x_mask])
            lows.append(x_lo[x_mask] - offsets[p][x_mask])
            highs.append(x_hi[x_mask] - offsets[p][x_mask])
    w_mask = np.isfinite(w_lo) | np.isfinite(w_hi)
    if w_mask.any():
        for p in range(intervals):
            sel = np.zeros((int(w_mask.sum()), nz))
            cols = n + nw * p + np.flatnonzero(w_mask)
            sel[np.arange(cols.size), cols] = 1.0
            rows.append(sel)
            lows.append(w_lo[w_mask])
            highs.append(w_hi[w_mask])
    v_mask = np.isfinite(v_lo) | np.isfinite(v_hi)
    if v_mask.any():
        for p in range(samples):
            rows.append(meas_maps[p][v_mask])
            lows.append(meas_offsets[p][v_mask] - v_hi[v_mask])
            highs.append(meas_offsets[p][v_mask] - v_lo[v_mask])

    if rows:
        problem = QpProblem(h=2.0 * hhat, f=-2.0 * ghat,
                            g=np.vstack(rows),
                            lo=np.concatenate(lows), hi=np.concatenate(highs))
    else:
        problem = QpProblem(h=2.0 * hhat, f=-2.0 * ghat)
    window = CondensedWindow(state_maps=state_maps, offsets=offsets, constant=constant)
    return problem, window


@dataclass
class EstimateRecord:
    """Per-step estimator output plus solver diagnostics."""

    k: int
    t: float
    xhat: np.ndarray
    window_fill: int
    qp_status: str
    qp_iterations: int
    qp_stationarity: float
    qp_primal: float
    qp_complementarity: float
    objective: float
    window_states: np.ndarray = field(repr=False, default=None)

    @property
    def degraded(self):
        return self.qp_status != "solved"


class MovingHorizonEstimator(BaseEstimator):
    """Constrained moving horizon estimator over a discrete model.

    Stateful and sequential: ``step`` consumes one sample and returns the
    estimate at the newest time; ``filter`` runs a whole measurement
    series.  Distinct instances are independent; one instance must not be
    stepped concurrently.
    """

    def __init__(self, discrete=None, c=None, config=None):
        self.discrete = discrete
        self.c = c
        self.config = config

    def reset(self):
        if self.discrete is None or self.c is None:
            raise ValueError("MovingHorizonEstimator needs a discrete model and a "
                             "measurement matrix")
        self._cfg = self.config if self.config is not None else MheConfig()
        self._c = np.atleast_2d(np.asarray(self.c, dtype=float))
        n = self.discrete.ad.shape[0]
        nw = self.discrete.brd.shape[1]
        self._arrival = self._cfg.prior(n)
        self._q_cov = np.diag(self._cfg.disturbance_diag(nw))
        self._r_cov = np.diag(self._cfg.measurement_diag(self._c.shape[0]))
        self._window = []
        self._k = -1
        self._prev = None  # (z*, intervals) for warm starting
        self.records_ = []
        return self

    @property
    def arrival(self) -> ArrivalCost:
        return self._arrival

    def step(self, y, u=None, road=None) -> EstimateRecord:
        """Push one sample and re-solve the horizon problem."""
        if not hasattr(self, "_window"):
            self.reset()
        discrete = self.discrete
        n = discrete.ad.shape[0]
        nw = discrete.brd.shape[1]
        y = check_finite("y", as_vector("y", y, self._c.shape[0]))
        u = np.zeros(discrete.bd.shape[1]) if u is None else as_vector("u", u, discrete.bd.shape[1])
        road = np.zeros(nw) if road is None else as_vector("road", road, nw)

        self._k += 1
        self._window.append((y, u, road))
        if len(self._window) > self._cfg.horizon + 1:
            y0, u0, r0 = self._window.pop(0)
            _, self._arrival = kf_step(discrete, self._c, self._arrival, u0, r0, y0,
                                       self._q_cov, self._r_cov,
                                       cov_reg=self._cfg.cov_reg)

        ys = np.array([s[0] for s in self._window])
        us = np.array([s[1] for s in self._window])
        rs = np.array([s[2] for s in self._window])
        problem, cond = condense_window(discrete, self._c, ys, us, rs,
                                        self._arrival, self._cfg)
        warm = self._warm_start(cond.intervals, n, nw)
        solution = solve_qp(problem, tol=self._cfg.qp_tol,
                            max_iter=self._cfg.qp_max_iter, warm_z=warm)
        states = cond.reconstruct(solution.z)
        self._prev = (solution.z, states, cond.intervals)

        record = EstimateRecord(
            k=self._k,
            t=self._k * discrete.ts,
            xhat=states[-1],
            window_fill=len(self._window),
            qp_status=solution.status,
            qp_iterations=solution.iterations,
            qp_stationarity=solution.stationarity,
            qp_primal=solution.primal,
            qp_complementarity=solution.complementarity,
            objective=solution.objective + cond.constant,
            window_states=states,
        )
        self.records_.append(record)
        return record

    def filter(self, ys, us=None, roads=None) -> np.ndarray:
        """Run the estimator over a whole series; returns the estimates."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        self.reset()
        out = np.empty((ys.shape[0], self.discrete.ad.shape[0]))
        for p in range(ys.shape[0]):
            u = None if us is None else us[p]
            road = None if roads is None else roads[p]
            out[p] = self.step(ys[p], u=u, road=road).xhat
        return out

    def _warm_start(self, intervals, n, nw):
        if self._prev is None:
            return None
        z_prev, states_prev, prev_intervals = self._prev
        warm = np.zeros(n + nw * intervals)
        if intervals == prev_intervals:
            # window slid: start from the next reconstructed state, shift w
            warm[:n] = states_prev[1] if len(states_prev) > 1 else states_prev[0]
            if intervals > 1:
                warm[n:n + nw * (intervals - 1)] = z_prev[n + nw:]
        else:
            # growing phase: same window start, one more disturbance block
            warm[:n + nw * prev_intervals] = z_prev
        return warm


def full_information_estimates(discrete: DiscreteModel, c, ys, us, rs,
                               config: MheConfig,
                               guard=FULL_INFORMATION_GUARD) -> np.ndarray:
    """Estimate sequence from the window-unbounded problem (oracle use).

    Solves, for every prefix of the data, one QP over the initial state
    and every disturbance so far.  The problem size grows with the data,
    so runs longer than ``guard`` steps are refused.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    steps = ys.shape[0]
    if steps > guard:
        raise ValueError(
            f"full-information estimation is guarded to {guard} steps, got {steps}")
    us = np.zeros((steps, discrete.bd.shape[1])) if us is None else np.atleast_2d(np.asarray(us, dtype=float))
    rs = np.zeros((steps, discrete.brd.shape[1])) if rs is None else np.atleast_2d(np.asarray(rs, dtype=float))
    n = discrete.ad.shape[0]
    prior = config.prior(n)
    out = np.empty((steps, n))
    for k in range(steps):
        problem, cond = condense_window(discrete, c, ys[:k + 1], us[:k + 1],
                                        rs[:k + 1], prior, config)
        solution = solve_qp(problem, tol=config.qp_tol, max_iter=config.qp_max_iter)
        out[k] = cond.reconstruct(solution.z)[-1]
    return out


def write_estimates_csv(path, records):
    """Estimates artifact: t, xhat1..xhatN, qp_iters, qp_status."""
    records = list(records)
    if not records:
        raise ValueError("no estimate records to write")
    n = records[0].xhat.size
    header = ["t"] + [f"xhat{i + 1}" for i in range(n)] + ["qp_iters", "qp_status"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for rec in records:
            cells = [repr(float(rec.t))]
            cells += [repr(float(v)) for v in rec.xhat]
            cells += [str(rec.qp_iterations), rec.qp_status]
            fh.write(",".join(cells) + "\n")
