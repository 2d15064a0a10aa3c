"""Exact zero-order-hold discretization of the continuous model.

Inputs are held constant over each sampling interval, so the discrete
matrices follow from the matrix exponential of the block matrix
[[A, I], [0, 0]]: the top-left block is Ad = exp(A ts) and the top-right
block is the integral of exp(A tau) over one period, which maps B and Br
to their discrete counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, check_finite
from .suspension import FullCarModel

_TAYLOR_ORDER = 16
_SCALE_NORM = 0.5

__all__ = ["DiscreteModel", "expm", "zoh"]


@dataclass(frozen=True)
class DiscreteModel:
    """Discrete dynamics x[p+1] = ad x[p] + bd u[p] + brd (road[p] + dist[p])."""

    ad: np.ndarray
    bd: np.ndarray
    brd: np.ndarray
    ts: float

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError(f"sampling period must be positive, got {self.ts}")
        for name in ("ad", "bd", "brd"):
            getattr(self, name).flags.writeable = False


def expm(m) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a truncated series.

    The argument is halved until its 1-norm is at most 0.5, the series is
    summed to a fixed order (truncation error far below double precision
    at that norm), then the result is squared back up.
    """
    m = as_matrix("m", np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    check_finite("m", m)

    norm = np.linalg.norm(m, 1)
    squarings = 0
    if norm > _SCALE_NORM:
        squarings = int(np.ceil(np.log2(norm / _SCALE_NORM)))
    scaled = m / (2.0**squarings)

    n = m.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _TAYLOR_ORDER + 1):
        term = term @ scaled / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def zoh(model: FullCarModel, ts: float) -> DiscreteModel:
    """Discretize the continuous model with a zero-order hold of period ts."""
    if not 0 < ts <= 1:
        raise ValueError(f"sampling period must lie in (0, 1], got {ts}")
    a = model.a
    n = a.shape[0]

    augmented = np.zeros((2 * n, 2 * n))
    augmented[:n, :n] = a
    augmented[:n, n:] = np.eye(n)
    phi = expm(augmented * ts)

    ad = phi[:n, :n]
    integral = phi[:n, n:]
    bd = integral @ model.b
    brd = integral @ model.br
    for name, mat in (("ad", ad), ("bd", bd), ("brd", brd)):
        check_finite(name, mat)
    return DiscreteModel(ad=ad, bd=bd, brd=brd, ts=float(ts))
