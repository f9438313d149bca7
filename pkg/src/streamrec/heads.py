"""Lightweight convolutional head: enriched image tokens to points + confidence.

Tokens are reshaped to their (H/p, W/p) grid, passed through a small stack of
3x3 stride-1 zero-padded convolutions, nearest-neighbor upsampled to pixel
resolution and refined by one more convolution into 4 channels: a 3-channel
point map in the local camera frame and one raw confidence channel mapped
through conf = 1 + exp(raw) (raw clamped at 20), so conf >= 1 and
log conf >= 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensorops import seeded_rng, truncated_normal
from .validation import ShapeError


@dataclass(eq=False)
class PointMap:
    """Per-pixel 3D points in the local camera frame plus a validity mask."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ShapeError(f"points must be (H, W, 3), got {self.points.shape}")
        if self.valid is None:
            self.valid = np.ones(self.points.shape[:2], dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.points.shape[:2]:
            raise ShapeError(f"valid mask {self.valid.shape} does not match {self.points.shape}")
        if not np.all(np.isfinite(self.points[self.valid])):
            raise ValueError("valid points must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.points.shape[:2]


@dataclass(eq=False)
class ConfidenceMap:
    """Per-pixel confidence, >= 1 so the log stays non-negative."""

    conf: np.ndarray

    def __post_init__(self):
        self.conf = np.asarray(self.conf, dtype=float)
        if self.conf.ndim != 2:
            raise ShapeError(f"confidence must be (H, W), got {self.conf.shape}")
        if not np.all(self.conf >= 1.0):
            raise ValueError("confidence must be >= 1 everywhere")


@dataclass(eq=False)
class ConvLayer:
    kernel: np.ndarray  # (kh, kw, cin, cout)
    bias: np.ndarray
    activation: bool = True


@dataclass(eq=False)
class ConvHeadWeights:
    patch_size: int
    layers: list[ConvLayer] = field(default_factory=list)
    refine: ConvLayer = None
    raw_conf_clip: float = 20.0


def conv2d(x, kernel, bias=None) -> np.ndarray:
    """2-D convolution, stride 1, zero padding, channels-last."""
    x = np.asarray(x, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    kh, kw, cin, cout = kernel.shape
    if x.ndim != 3 or x.shape[2] != cin:
        raise ShapeError(f"input {x.shape} does not match kernel {kernel.shape}")
    xp = np.pad(x, ((kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    out = np.einsum("hwcij,ijcd->hwd", win, kernel)
    if bias is not None:
        out = out + np.asarray(bias, dtype=float)
    return out


def init_conv_head(seed: int, channels: int, patch_size: int, hidden: int = 32) -> ConvHeadWeights:
    rng = seeded_rng(seed)
    layers = [
        ConvLayer(truncated_normal(rng, (3, 3, channels, hidden)), np.zeros(hidden)),
        ConvLayer(truncated_normal(rng, (3, 3, hidden, hidden)), np.zeros(hidden)),
    ]
    refine = ConvLayer(truncated_normal(rng, (3, 3, hidden, 4)), np.zeros(4), activation=False)
    return ConvHeadWeights(patch_size, layers, refine)


def identity_conv_head(channels: int) -> ConvHeadWeights:
    """Patch-1 head whose single 1x1 conv copies the token's first 4 channels."""
    if channels < 4:
        raise ValueError(f"identity conv head needs >= 4 channels, got {channels}")
    kernel = np.zeros((1, 1, channels, 4))
    kernel[0, 0, :4, :4] = np.eye(4)
    return ConvHeadWeights(1, [], ConvLayer(kernel, np.zeros(4), activation=False))


def conv_head(tokens, weights: ConvHeadWeights, image_size) -> tuple[PointMap, ConfidenceMap]:
    """Decode one frame's image tokens into a point map and confidence map."""
    tokens = np.asarray(tokens, dtype=float)
    height, width = image_size
    p = weights.patch_size
    if height % p or width % p:
        raise ShapeError(f"patch size {p} does not divide image {height}x{width}")
    gh, gw = height // p, width // p
    if tokens.ndim != 2 or tokens.shape[0] != gh * gw:
        raise ShapeError(
            f"expected {gh * gw} tokens for a {gh}x{gw} grid, got {tokens.shape}")

    grid = tokens.reshape(gh, gw, tokens.shape[1])
    for layer in weights.layers:
        grid = conv2d(grid, layer.kernel, layer.bias)
        if layer.activation:
            grid = np.maximum(grid, 0.0)
    if p > 1:
        grid = np.repeat(np.repeat(grid, p, axis=0), p, axis=1)
    out = conv2d(grid, weights.refine.kernel, weights.refine.bias)
    if out.shape != (height, width, 4):
        raise ShapeError(f"head produced {out.shape}, expected {(height, width, 4)}")

    raw = np.minimum(out[..., 3], weights.raw_conf_clip)
    return (PointMap(out[..., :3], np.ones((height, width), dtype=bool)),
            ConfidenceMap(1.0 + np.exp(raw)))
