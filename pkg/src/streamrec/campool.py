"""Append-only camera-token pool and the pooled camera head.

Each processed window contributes one concatenated local+global camera token
per frame slot; the pool keeps them all (overlapped frames appear once per
window they were in). Pose prediction for window t runs a masked
self-attention stack over [pool tokens of windows < t, current window tokens]
with the window-causal mask, so the current window conditions on every
historical camera token while later pool contents can never leak backwards:
the head filters the pool to windows before t by construction, which makes
its outputs bitwise independent of anything appended afterwards.

A pool entry costs one 2C float64 vector per frame slot (2C * 8 bytes),
against depth * 2 * N * C * 8 bytes for caching every attention layer's keys
and values per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attention import AttentionMask, BlockWeights, _init_block, attention_block
from .geomath import Pose, Quaternion
from .tensorops import linear, seeded_rng, truncated_normal
from .validation import EmptyInputError, OrderingError, ShapeError


def concat_tokens(local, global_) -> np.ndarray:
    """Channel-concatenate local and global camera tokens into one 2C vector.

    Accepts single vectors or (n, C) batches; the two sides must have the
    same channel width.
    """
    a = np.asarray(local, dtype=float)
    b = np.asarray(global_, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"token shapes differ: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=-1)


@dataclass(frozen=True, eq=False)
class PoolEntry:
    window_index: int
    slot: int
    frame_id: int
    token: np.ndarray


class CameraTokenPool:
    """Append-only, single-writer store of per-(window, slot) camera tokens."""

    def __init__(self):
        self.entries: list[PoolEntry] = []
        self._last_window = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def window_count(self) -> int:
        return self._last_window

    def append_window(self, tokens, window_index: int, frame_ids: Sequence[int]) -> None:
        """Add one window's tokens; windows must arrive in order 1, 2, ..."""
        tokens = np.asarray(tokens, dtype=float)
        if tokens.ndim != 2:
            raise ShapeError(f"window tokens must be (w, 2C), got {tokens.shape}")
        if len(frame_ids) != tokens.shape[0]:
            raise ShapeError(f"{len(frame_ids)} frame ids for {tokens.shape[0]} tokens")
        if window_index != self._last_window + 1:
            raise OrderingError(
                f"window {window_index} appended after window {self._last_window}")
        for slot, frame_id in enumerate(frame_ids):
            self.entries.append(
                PoolEntry(window_index, slot, frame_id, np.array(tokens[slot], dtype=float)))
        self._last_window = window_index

    def entries_before(self, window_index: int) -> list[PoolEntry]:
        return [e for e in self.entries if e.window_index < window_index]

    def memory_bytes(self) -> int:
        return sum(e.token.nbytes for e in self.entries)


@dataclass(frozen=True)
class CameraHeadConfig:
    channels: int          # concatenated token width (2C)
    heads: int = 4
    depth: int = 2
    mlp_ratio: int = 4


@dataclass(eq=False)
class CameraHeadWeights:
    config: CameraHeadConfig
    blocks: list[BlockWeights] = field(default_factory=list)
    out_w: np.ndarray = None
    out_b: np.ndarray = None


def init_camera_head(seed: int, config: CameraHeadConfig) -> CameraHeadWeights:
    rng = seeded_rng(seed)
    blocks = [_init_block(rng, config.channels, config.heads, config.mlp_ratio)
              for _ in range(config.depth)]
    return CameraHeadWeights(config, blocks,
                             truncated_normal(rng, (config.channels, 7)), np.zeros(7))


def identity_camera_head(channels: int) -> CameraHeadWeights:
    """Zero-depth head whose terminal map copies the token's first 7 channels."""
    if channels < 7:
        raise ValueError(f"identity camera head needs >= 7 channels, got {channels}")
    out_w = np.zeros((channels, 7))
    out_w[:7, :7] = np.eye(7)
    return CameraHeadWeights(CameraHeadConfig(channels, heads=1, depth=0), [], out_w, np.zeros(7))


def decode_raw_pose(raw) -> Pose:
    """Map a raw 7-vector to a pose: unit sign-canonical quaternion + translation.

    A ~zero rotation block falls back to the identity quaternion so the decode
    stays total and deterministic.
    """
    raw = np.asarray(raw, dtype=float).reshape(7)
    q = raw[:4]
    if np.linalg.norm(q) < 1e-12:
        rotation = Quaternion.identity()
    else:
        rotation = Quaternion.from_array(q, normalize=True)
    return Pose(rotation, raw[4:7])


def camera_head(current, pool: CameraTokenPool, window_index: int,
                weights: CameraHeadWeights) -> list[Pose]:
    """Predict one pose per current-window frame from pool + current tokens.

    ``current`` is the (w, 2C) block of this window's concatenated camera
    tokens; conditioning covers pool entries of windows strictly before
    ``window_index`` plus the current window itself.
    """
    current = np.asarray(current, dtype=float)
    if current.ndim != 2 or current.shape[0] == 0:
        raise EmptyInputError("camera head needs a non-empty (w, 2C) current window")
    if current.shape[1] != weights.config.channels:
        raise ShapeError(
            f"token width {current.shape[1]} does not match head ({weights.config.channels})")
    prefix = pool.entries_before(window_index)
    seq = np.vstack([e.token for e in prefix] + [current])
    windows = np.array([e.window_index for e in prefix] + [window_index] * current.shape[0])
    mask = AttentionMask(windows[None, :] <= windows[:, None])
    x = seq
    for block in weights.blocks:
        x = attention_block(x, block, mask)
    raw = linear(x[-current.shape[0]:], weights.out_w, weights.out_b)
    return [decode_raw_pose(row) for row in raw]
