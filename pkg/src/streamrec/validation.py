"""Input validation helpers and the error types raised across the package."""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Array arguments do not have the shapes an operation requires."""


class EmptyInputError(ValueError):
    """An operation received no usable data (empty set, no valid pixels, N too small)."""


class EmptyRowError(ValueError):
    """A softmax row has every entry blocked."""


class DegenerateConfigurationError(ValueError):
    """A point configuration is too degenerate for alignment (rank < 2 or < 3 points)."""


class OrderingError(ValueError):
    """Frame ids or window indices arrived out of order."""


class ContainerFormatError(ValueError):
    """A container file is corrupt. Carries the byte offset of the problem."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


def check_finite(value, name: str = "value") -> np.ndarray:
    """Return ``value`` as a float array, raising ValueError on NaN/inf."""
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_vector(value, size: int, name: str = "vector") -> np.ndarray:
    """Return ``value`` as a finite 1-D float64 array of the given size."""
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ShapeError(f"{name} must have {size} entries, got shape {np.shape(value)}")
    return check_finite(arr, name)


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Return ``value`` as a 2-D float array without copying when possible."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {arr.ndim}-D")
    return arr


def as_points(value, name: str = "points") -> np.ndarray:
    """Return an (n, 3) float64 point array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"{name} must have shape (n, 3), got {arr.shape}")
    return arr
