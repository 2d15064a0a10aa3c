"""Kalman filtering: baseline estimator and arrival-cost engine.

The single-step recursion is exposed as a pure function so the horizon
estimator can reuse it to advance its arrival cost, and wrapped in a
scikit-learn style class for whole-run filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, as_vector, check_finite
from .discretize import DiscreteModel

__all__ = ["ArrivalCost", "kf_step", "KalmanFilter"]


@dataclass(frozen=True)
class ArrivalCost:
    """Prior pair (mean, covariance) summarizing all data before a window."""

    xbar: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        xbar = as_vector("xbar", self.xbar)
        pi = as_matrix("pi", self.pi, (xbar.size, xbar.size))
        check_finite("xbar", xbar)
        check_finite("pi", pi)
        skew = np.max(np.abs(pi - pi.T))
        if skew > 1e-10 * max(1.0, np.max(np.abs(pi))):
            raise ValueError(f"prior covariance must be symmetric, asymmetry {skew:.3e}")
        np.linalg.cholesky(pi)  # raises LinAlgError unless positive definite
        object.__setattr__(self, "xbar", xbar)
        object.__setattr__(self, "pi", pi)

    @property
    def dim(self):
        return self.xbar.size


def kf_step(discrete: DiscreteModel, c, prior: ArrivalCost, u, road, y,
            q_cov, r_cov, cov_reg=0.0):
    """One measurement update plus one prediction.

    ``prior`` holds the mean/covariance at the current step before seeing
    ``y``.  Returns the filtered state at the current step and the prior
    pair for the next step.  The process noise covariance ``q_cov`` lives
    on the disturbance channels and is mapped through the disturbance
    input matrix; ``cov_reg`` adds a diagonal floor to the propagated
    covariance.
    """
    ad, bd, brd = discrete.ad, discrete.bd, discrete.brd
    n = ad.shape[0]
    c = as_matrix("c", c)
    y = as_vector("y", y, c.shape[0])
    u = np.zeros(bd.shape[1]) if u is None else as_vector("u", u, bd.shape[1])
    road = np.zeros(brd.shape[1]) if road is None else as_vector("road", road, brd.shape[1])
    q_cov = as_matrix("q_cov", q_cov, (brd.shape[1], brd.shape[1]))
    r_cov = as_matrix("r_cov", r_cov, (c.shape[0], c.shape[0]))

    x = prior.xbar
    p = prior.pi

    s = c @ p @ c.T + r_cov
    try:
        s_chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not invertible "
                         "(degenerate measurement covariance)") from exc
    # gain K = P C' S^-1 via triangular solves against the factor
    pct = p @ c.T
    gain = np.linalg.solve(s_chol.T, np.linalg.solve(s_chol, pct.T)).T

    innovation = y - c @ x
    x_filt = x + gain @ innovation
    ikc = np.eye(n) - gain @ c
    p_filt = ikc @ p @ ikc.T + gain @ r_cov @ gain.T  # Joseph form

    x_next = ad @ x_filt + bd @ u + brd @ road
    p_next = ad @ p_filt @ ad.T + brd @ q_cov @ brd.T
    if cov_reg:
        p_next = p_next + cov_reg * np.eye(n)
    p_next = 0.5 * (p_next + p_next.T)
    return x_filt, ArrivalCost(xbar=x_next, pi=p_next)


class KalmanFilter(BaseEstimator):
    """Sequential linear filter over the discretized suspension model.

    Parameters
    ----------
    discrete : DiscreteModel
        Sampled dynamics (ad, bd, brd, ts).
    c : array, shape (p, n)
        Measurement selector.
    q_cov : array, shape (nw, nw)
        Disturbance covariance on the road channels.
    r_cov : array, shape (p, p)
        Measurement noise covariance.
    x0, pi0 : array
        Initial prior mean and covariance.
    cov_reg : float
        Diagonal floor added to the propagated covariance each step.
    """

    def __init__(self, discrete=None, c=None, q_cov=None, r_cov=None,
                 x0=None, pi0=None, cov_reg=0.0):
        self.discrete = discrete
        self.c = c
        self.q_cov = q_cov
        self.r_cov = r_cov
        self.x0 = x0
        self.pi0 = pi0
        self.cov_reg = cov_reg

    def reset(self):
        if self.discrete is None or self.c is None:
            raise ValueError("KalmanFilter needs a discrete model and a measurement matrix")
        n = self.discrete.ad.shape[0]
        x0 = np.zeros(n) if self.x0 is None else as_vector("x0", self.x0, n)
        pi0 = np.eye(n) if self.pi0 is None else as_matrix("pi0", self.pi0, (n, n))
        self._prior = ArrivalCost(xbar=x0, pi=pi0)
        return self

    @property
    def prior(self) -> ArrivalCost:
        return self._prior

    def step(self, y, u=None, road=None):
        """Consume one measurement; returns the filtered state at this step."""
        if not hasattr(self, "_prior"):
            self.reset()
        x_filt, self._prior = kf_step(
            self.discrete, self.c, self._prior, u, road, y,
            self._q_cov(), self._r_cov(), cov_reg=self.cov_reg)
        return x_filt

    def filter(self, ys, us=None, roads=None):
        """Filter a whole run; rows of ``ys`` are per-step measurements."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        t_steps = ys.shape[0]
        self.reset()
        out = np.empty((t_steps, self.discrete.ad.shape[0]))
        for p in range(t_steps):
            u = None if us is None else us[p]
            road = None if roads is None else roads[p]
            out[p] = self.step(ys[p], u=u, road=road)
        return out

    def _q_cov(self):
        nw = self.discrete.brd.shape[1]
        return np.eye(nw) if self.q_cov is None else as_matrix("q_cov", self.q_cov, (nw, nw))

    def _r_cov(self):
        p = np.atleast_2d(np.asarray(self.c, dtype=float)).shape[0]
        return np.eye(p) if self.r_cov is None else as_matrix("r_cov", self.r_cov, (p, p))
