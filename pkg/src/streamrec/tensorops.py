"""Dense numerical kernels: linear maps, masked softmax, layer norm, seeded init.

Matrices are plain float64 numpy arrays (float32 only behind the benchmark
precision flag). All kernels are pure and bit-deterministic for a fixed seed:
masked reductions gather the allowed entries first, so appending blocked
columns can never perturb a result.
"""

from __future__ import annotations

from typing import Callable, Iterator, Optional

import numpy as np
from scipy.special import erf

from .validation import EmptyRowError, ShapeError, as_matrix


def seeded_rng(seed: int) -> np.random.Generator:
    """Platform-stable generator: identical seed, identical stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal samples with |z| > 2 resampled, then scaled by ``std``."""
    out = rng.standard_normal(shape)
    for _ in range(64):
        bad = np.abs(out) > 2.0
        if not bad.any():
            break
        out[bad] = rng.standard_normal(int(bad.sum()))
    return out * std


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def linear(x, weight, bias=None) -> np.ndarray:
    """Affine map x @ W + b, bias broadcast over rows."""
    x = np.asarray(x, dtype=float)
    w = as_matrix(weight, "weight")
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"cannot multiply {x.shape} by {w.shape}")
    out = x @ w
    if bias is not None:
        b = np.asarray(bias, dtype=float)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"bias shape {b.shape} does not match output dim {w.shape[1]}")
        out = out + b
    return out


def _row_groups(allowed: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Group row indices by identical allow patterns, preserving first-seen order."""
    groups: dict[bytes, list[int]] = {}
    for r in range(allowed.shape[0]):
        groups.setdefault(allowed[r].tobytes(), []).append(r)
    for rows in groups.values():
        yield np.asarray(rows), np.flatnonzero(allowed[rows[0]])


def softmax_rows(x, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise stable softmax restricted to allowed entries.

    Blocked entries come out exactly 0 and never enter the max/sum reductions,
    so results are bitwise independent of whatever sits in blocked columns.
    A fully blocked row raises :class:`EmptyRowError`.
    """
    x = as_matrix(x, "softmax input")
    if allowed is None:
        m = x.max(axis=1, keepdims=True)
        e = np.exp(x - m)
        return e / e.sum(axis=1, keepdims=True)
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != x.shape:
        raise ShapeError(f"mask shape {allowed.shape} does not match input {x.shape}")
    if not allowed.any(axis=1).all():
        raise EmptyRowError("softmax row with every entry blocked")
    out = np.zeros_like(x)
    for rows, cols in _row_groups(allowed):
        sub = x[np.ix_(rows, cols)]
        m = sub.max(axis=1, keepdims=True)
        e = np.exp(sub - m)
        out[np.ix_(rows, cols)] = e / e.sum(axis=1, keepdims=True)
    return out


def layer_norm(x, gain, shift, eps: float = 1e-6) -> np.ndarray:
    """Normalize each row to zero mean / unit variance, then scale and shift.

    The divisor is sqrt(max(var, eps)): rows with real variance are normalized
    exactly, constant rows map to the shift instead of dividing by ~0.
    """
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    xh = (x - mu) / np.sqrt(np.maximum(var, eps))
    return xh * np.asarray(gain, dtype=float) + np.asarray(shift, dtype=float)


def finite_difference(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field, one element at a time."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2.0 * h)
    return grad
