"""Dense convex quadratic programming for box-constrained horizon problems.

Solves

    minimize    0.5 z' H z + f' z
    subject to  lo <= G z <= hi        (infinite bounds allowed)

with an operator-splitting iteration: a regularized linear solve with a
fixed penalty alternating with a projection onto the bound set, the dual
variable accumulating the constraint multipliers.  Once the iterates are
close, an active-set refinement solves the equality-constrained KKT
system for the guessed active rows and is accepted only if the refined
point passes the full KKT check.  Every reported solution carries its
stationarity, primal-feasibility and complementarity residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._validation import as_matrix, as_vector, check_finite

_SIGMA = 1e-6          # primal regularization of the splitting step
_CHECK_EVERY = 25      # residual check period [iterations]
_POLISH_REG = 1e-9

__all__ = ["QpProblem", "QpSolution", "solve_qp", "problem_from_dict", "problem_to_dict"]


@dataclass
class QpProblem:
    """Problem data.  ``g`` may be None for an unconstrained problem."""

    h: np.ndarray
    f: np.ndarray
    g: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.h = as_matrix("h", self.h)
        n = self.h.shape[0]
        if self.h.shape != (n, n):
            raise ValueError(f"h must be square, got {self.h.shape}")
        check_finite("h", self.h)
        skew = np.max(np.abs(self.h - self.h.T))
        if skew > 1e-10 * max(1.0, np.max(np.abs(self.h))):
            raise ValueError(f"h must be symmetric, asymmetry {skew:.3e}")
        self.f = check_finite("f", as_vector("f", self.f, n))
        if self.g is None:
            self.g = np.zeros((0, n))
            self.lo = np.zeros(0)
            self.hi = np.zeros(0)
        else:
            self.g = check_finite("g", as_matrix("g", self.g))
            if self.g.shape[1] != n:
                raise ValueError(f"g must have {n} columns, got {self.g.shape[1]}")
            m = self.g.shape[0]
            self.lo = as_vector("lo", self.lo, m) if self.lo is not None else np.full(m, -np.inf)
            self.hi = as_vector("hi", self.hi, m) if self.hi is not None else np.full(m, np.inf)

    @property
    def n(self):
        return self.h.shape[0]

    @property
    def m(self):
        return self.g.shape[0]

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * z @ self.h @ z + self.f @ z


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    stationarity: float
    primal: float
    complementarity: float
    iterations: int
    status: str                 # "solved" | "max-iter" | "infeasible"
    multipliers: np.ndarray

    @property
    def solved(self):
        return self.status == "solved"


def _kkt_residuals(h, f, g, lo, hi, z, y):
    """(stationarity, primal violation, complementarity), all inf-norms."""
    stationarity = np.max(np.abs(h @ z + f + (g.T @ y if g.shape[0] else 0.0)))
    if g.shape[0] == 0:
        return stationarity, 0.0, 0.0
    gz = g @ z
    primal = max(float(np.max(np.maximum(gz - hi, 0.0), initial=0.0)),
                 float(np.max(np.maximum(lo - gz, 0.0), initial=0.0)))
    mu = np.maximum(y, 0.0)
    nu = np.maximum(-y, 0.0)
    gap_hi = hi - gz
    gap_lo = gz - lo
    hi_unbounded = np.isinf(gap_hi)
    lo_unbounded = np.isinf(gap_lo)
    comp_hi = np.where(hi_unbounded, np.where(mu > 1e-14, np.inf, 0.0),
                       mu * np.abs(np.where(hi_unbounded, 0.0, gap_hi)))
    comp_lo = np.where(lo_unbounded, np.where(nu > 1e-14, np.inf, 0.0),
                       nu * np.abs(np.where(lo_unbounded, 0.0, gap_lo)))
    comp = float(max(np.max(comp_hi, initial=0.0), np.max(comp_lo, initial=0.0)))
    return float(stationarity), primal, comp


def _solve_unconstrained(h, f):
    try:
        factor = cho_factor(h)
        return cho_solve(factor, -f)
    except np.linalg.LinAlgError:
        pass
    except ValueError:
        pass
    return np.linalg.lstsq(h, -f, rcond=None)[0]


def _polish(h, f, g, lo, hi, z, y, s, tol):
    """Solve the KKT system for the guessed active set; None if it fails.

    Active rows are read off the projected iterate: after clipping, an
    active constraint sits exactly on its bound.  The multiplier sign
    breaks ties, and the refined point is only accepted when it passes
    the full KKT check.
    """
    scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
    act_cut = 1e-8 * scale
    lower = (s <= lo) | (y < -act_cut)
    upper = (s >= hi) | (y > act_cut)
    lower &= np.isfinite(lo)
    upper &= np.isfinite(hi)
    upper &= ~lower

    rows = np.flatnonzero(lower | upper)
    n = h.shape[0]
    if rows.size == 0:
        z_new = _solve_unconstrained(h, f)
        y_new = np.zeros(g.shape[0])
    else:
        a = g[rows]
        b = np.where(lower[rows], lo[rows], hi[rows])
        k = rows.size
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = h + _POLISH_REG * np.eye(n)
        kkt[:n, n:] = a.T
        kkt[n:, :n] = a
        kkt[n:, n:] = -_POLISH_REG * np.eye(k)
        rhs = np.concatenate([-f, b])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        # one refinement pass against the unregularized system
        true_kkt = kkt.copy()
        true_kkt[:n, :n] = h
        true_kkt[n:, n:] = 0.0
        residual = rhs - true_kkt @ sol
        try:
            sol = sol + np.linalg.solve(kkt, residual)
        except np.linalg.LinAlgError:
            pass
        z_new = sol[:n]
        y_new = np.zeros(g.shape[0])
        y_new[rows] = sol[n:]
    if not np.all(np.isfinite(z_new)):
        return None
    stat, prim, comp = _kkt_residuals(h, f, g, lo, hi, z_new, y_new)
    if max(stat, prim, comp) <= tol:
        return z_new, y_new, stat, prim, comp
    return None


def _default_rho(h, g):
    hn = np.linalg.norm(h, "fro")
    gn = np.linalg.norm(g.T @ g, "fro")
    if gn <= 0:
        return 1.0
    return float(np.clip(hn / gn, 1e-3, 1e6))


def solve_qp(problem: QpProblem, tol=1e-8, max_iter=20000,
             warm_z=None, warm_y=None, rho=None) -> QpSolution:
    """Solve the box-constrained QP to the requested KKT tolerance.

    Deterministic for fixed inputs.  ``warm_z``/``warm_y`` seed the
    iteration, which horizon problems exploit by passing the shifted
    previous solution.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    h = 0.5 * (problem.h + problem.h.T)
    f = problem.f
    n = problem.n

    # rows unconstrained on both sides contribute nothing
    keep = np.isfinite(problem.lo) | np.isfinite(problem.hi)
    g = problem.g[keep]
    lo = problem.lo[keep]
    hi = problem.hi[keep]
    m = g.shape[0]

    def expand(y_kept):
        full = np.zeros(problem.m)
        full[keep] = y_kept
        return full

    if np.any(lo > hi):
        z0 = np.zeros(n) if warm_z is None else as_vector("warm_z", warm_z, n)
        return QpSolution(z=z0, objective=problem.objective(z0),
                          stationarity=np.inf, primal=np.inf, complementarity=np.inf,
                          iterations=0, status="infeasible",
                          multipliers=np.zeros(problem.m))

    if m == 0:
        z = _solve_unconstrained(h, f)
        stat, prim, comp = _kkt_residuals(h, f, g, lo, hi, z, np.zeros(0))
        status = "solved" if stat <= max(tol, 1e-8 * (1 + np.max(np.abs(f), initial=0.0))) else "max-iter"
        return QpSolution(z=z, objective=problem.objective(z),
                          stationarity=stat, primal=prim, complementarity=comp,
                          iterations=0, status=status, multipliers=np.zeros(problem.m))

    # a fixed penalty per attempt; if an attempt stalls, retry the remaining
    # budget with the penalty shifted and the best iterate carried over
    rho0 = _default_rho(h, g) if rho is None else float(rho)
    ladder = [rho0] if rho is not None else [rho0, 1e2 * rho0, 1e-2 * rho0, 1e4 * rho0]
    budget = max_iter if rho is not None else max(100, max_iter // len(ladder))

    z = np.zeros(n) if warm_z is None else as_vector("warm_z", warm_z, n).copy()
    if warm_y is None:
        y = np.zeros(m)
    else:
        y = as_vector("warm_y", warm_y, problem.m)[keep].copy()

    best = None
    it_total = 0
    for attempt_rho in ladder:
        if it_total >= max_iter:
            break
        kmat = h + _SIGMA * np.eye(n) + attempt_rho * (g.T @ g)
        factor = cho_factor(kmat)
        s = np.clip(g @ z, lo, hi)
        attempt_end = min(max_iter, it_total + budget)
        while it_total < attempt_end:
            it_total += 1
            rhs = _SIGMA * z - f + g.T @ (attempt_rho * s - y)
            z = cho_solve(factor, rhs)
            gz = g @ z
            s = np.clip(gz + y / attempt_rho, lo, hi)
            y = y + attempt_rho * (gz - s)

            if it_total % _CHECK_EVERY == 0 or it_total == attempt_end:
                stat, prim, comp = _kkt_residuals(h, f, g, lo, hi, z, y)
                worst = max(stat, prim, comp)
                if best is None or worst < best[0]:
                    best = (worst, z.copy(), y.copy(), stat, prim, comp)
                if worst <= tol:
                    return QpSolution(z=z, objective=problem.objective(z),
                                      stationarity=stat, primal=prim,
                                      complementarity=comp, iterations=it_total,
                                      status="solved", multipliers=expand(y))
                polished = _polish(h, f, g, lo, hi, z, y, s, tol)
                if polished is not None:
                    zp, yp, pstat, pprim, pcomp = polished
                    return QpSolution(z=zp, objective=problem.objective(zp),
                                      stationarity=pstat, primal=pprim,
                                      complementarity=pcomp, iterations=it_total,
                                      status="solved", multipliers=expand(yp))
        # carry the most promising iterate into the next attempt
        _, z, y, *_ = best
        z = z.copy()
        y = y.copy()

    _, zb, yb, stat, prim, comp = best
    return QpSolution(z=zb, objective=problem.objective(zb),
                      stationarity=stat, primal=prim, complementarity=comp,
                      iterations=it_total, status="max-iter", multipliers=expand(yb))


def _bound_from_json(value):
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("inf", "+inf", "infinity"):
            return np.inf
        if lowered in ("-inf", "-infinity"):
            return -np.inf
        raise ValueError(f"unrecognized bound value {value!r}")
    return float(value)


def problem_from_dict(data: dict) -> QpProblem:
    """Build a QpProblem from a plain JSON-style dict (debug CLI input)."""
    unknown = set(data) - {"h", "f", "g", "lo", "hi"}
    if unknown:
        raise ValueError(f"unknown problem keys: {sorted(unknown)}")
    h = data["h"]
    f = data["f"]
    g = data.get("g")
    lo = data.get("lo")
    hi = data.get("hi")
    if lo is not None:
        lo = [_bound_from_json(v) for v in lo]
    if hi is not None:
        hi = [_bound_from_json(v) for v in hi]
    return QpProblem(h=h, f=f, g=g, lo=lo, hi=hi)


def problem_to_dict(problem: QpProblem) -> dict:
    def bound(v):
        if np.isposinf(v):
            return "inf"
        if np.isneginf(v):
            return "-inf"
        return float(v)

    return {
        "h": problem.h.tolist(),
        "f": problem.f.tolist(),
        "g": problem.g.tolist(),
        "lo": [bound(v) for v in problem.lo],
        "hi": [bound(v) for v in problem.hi],
    }
