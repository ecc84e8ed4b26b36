"""Input validation helpers.

All public entry points convert inputs to float64 ndarrays through these
helpers so that shape and finiteness errors surface as
:class:`~risksde.errors.InvalidArgumentError` with a readable message.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


def as_vector(x, name: str, dim: int | None = None, nonnegative: bool = False) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally of length ``dim``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidArgumentError(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    if nonnegative and np.any(arr < 0):
        raise InvalidArgumentError(f"{name} must be entrywise nonnegative")
    return arr


def as_matrix(x, name: str, cols: int | None = None, allow_nan: bool = False) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array; row vectors are promoted to (1, d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise InvalidArgumentError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not allow_nan and not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return arr


def check_time(t: float, horizon: float, name: str = "t") -> float:
    """Validate a diffusion time against ``[0, horizon]``."""
    t = float(t)
    if not np.isfinite(t) or t < 0.0 or t > horizon:
        raise InvalidArgumentError(f"{name}={t} outside [0, {horizon}]")
    return t


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise InvalidArgumentError(f"{name} must be positive, got {value}")
    return value


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {value}")
    return value
