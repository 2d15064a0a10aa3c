"""Input validation helpers shared across the package API."""

from __future__ import annotations

import numpy as np

__all__ = ["as_vector", "as_matrix", "check_finite", "check_positive"]


def as_vector(name, x, size=None, allow_none_size=False):
    """Coerce ``x`` to a 1-D float array, checking its length when given."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


def as_matrix(name, x, shape=None):
    """Coerce ``x`` to a 2-D float array, checking its shape when given."""
    arr = np.atleast_2d(np.asarray(x, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    return arr


def check_finite(name, arr):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be strictly positive, got {value}")
    return float(value)
