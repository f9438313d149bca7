"""Masked multi-head attention, window-causal masks, and the window decoder.

The decoder consumes one window of frames, each frame a row block of
``tokens_per_frame + 1`` tokens (camera token first). Every depth unit runs,
in order: a cross-attention read from the state tokens, frame-wise
self-attention (tokens never cross frames), global self-attention over the
whole window, and a cross-attention write that updates the state tokens. The
"local" outputs are the residual stream after the last unit's frame-wise
block, the "global" outputs after its global block; a zero-depth decoder is
the identity.

The window-causal mask family allows a key exactly when its window index is
no later than the query's window (the whole current window stays visible to
itself).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensorops import gelu, layer_norm, linear, seeded_rng, softmax_rows, truncated_normal
from .validation import ShapeError


@dataclass(frozen=True, eq=False)
class AttentionMask:
    """Boolean allow grid; depends only on the (window, slot) layout."""

    allowed: np.ndarray

    @property
    def query_count(self) -> int:
        return self.allowed.shape[0]

    @property
    def key_count(self) -> int:
        return self.allowed.shape[1]


def build_window_mask(window_size: int, window_index: int, tokens_per_frame: int = 1,
                      total_windows: Optional[int] = None) -> AttentionMask:
    """Mask for the tokens of window ``window_index`` attending over windows 1..total.

    Queries are the current window's tokens; keys run over all windows up to
    ``total_windows`` (defaulting to the current window). A key is allowed iff
    its window is <= the query's window, so any later windows present in the
    key sequence are blocked wholesale.
    """
    if window_index < 1:
        raise ValueError(f"window_index must be >= 1, got {window_index}")
    if total_windows is None:
        total_windows = window_index
    if total_windows < window_index:
        raise ValueError("total_windows cannot be smaller than window_index")
    per_window = window_size * tokens_per_frame
    key_windows = np.repeat(np.arange(1, total_windows + 1), per_window)
    allowed = np.broadcast_to(key_windows <= window_index,
                              (per_window, per_window * total_windows)).copy()
    return AttentionMask(allowed)


def build_stream_mask(num_windows: int, tokens_per_window: int) -> AttentionMask:
    """Full training-style mask: every position queries, causality at window granularity."""
    if num_windows < 1:
        raise ValueError("need at least one window")
    win = np.repeat(np.arange(1, num_windows + 1), tokens_per_window)
    return AttentionMask(win[None, :] <= win[:, None])


@dataclass(eq=False)
class MhaWeights:
    """Projection weights for one multi-head attention layer."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    heads: int


def init_mha_weights(rng: np.random.Generator, dim: int, heads: int) -> MhaWeights:
    if dim % heads != 0:
        raise ValueError(f"channel dim {dim} not divisible by {heads} heads")
    mk = lambda: truncated_normal(rng, (dim, dim))
    z = np.zeros(dim)
    return MhaWeights(mk(), mk(), mk(), mk(), z.copy(), z.copy(), z.copy(), z.copy(), heads)


def identity_mha_weights(dim: int, heads: int = 1) -> MhaWeights:
    eye = np.eye(dim)
    z = np.zeros(dim)
    return MhaWeights(eye.copy(), eye.copy(), eye.copy(), eye.copy(),
                      z.copy(), z.copy(), z.copy(), z.copy(), heads)


def mha(queries, keys, values, mask: Optional[AttentionMask], weights: MhaWeights) -> np.ndarray:
    """Scaled dot-product attention with per-head masked softmax.

    Blocked keys are gathered out before any reduction, which keeps outputs
    bitwise identical when extra blocked keys are appended.
    """
    q = linear(queries, weights.wq, weights.bq)
    k = linear(keys, weights.wk, weights.bk)
    v = linear(values, weights.wv, weights.bv)
    if k.shape[0] != v.shape[0]:
        raise ShapeError("keys and values must have matching row counts")
    nq, dim = q.shape
    nk = k.shape[0]
    heads = weights.heads
    dh = dim // heads
    if mask is not None and mask.allowed.shape != (nq, nk):
        raise ShapeError(f"mask shape {mask.allowed.shape} does not match ({nq}, {nk})")

    qh = q.reshape(nq, heads, dh)
    kh = k.reshape(nk, heads, dh)
    vh = v.reshape(nk, heads, dh)
    out = np.empty((nq, heads, dh))
    scale = 1.0 / np.sqrt(dh)

    if mask is None:
        for h in range(heads):
            probs = softmax_rows(qh[:, h, :] @ kh[:, h, :].T * scale)
            out[:, h, :] = probs @ vh[:, h, :]
    else:
        from .tensorops import _row_groups

        groups = list(_row_groups(mask.allowed))
        for h in range(heads):
            for rows, cols in groups:
                scores = qh[rows, h, :] @ kh[cols, h, :].T * scale
                probs = softmax_rows(scores)
                out[rows, h, :] = probs @ vh[cols, h, :]
    return linear(out.reshape(nq, dim), weights.wo, weights.bo)


@dataclass(eq=False)
class BlockWeights:
    """Pre-LN self-attention block followed by a pre-LN MLP."""

    ln_attn_gain: np.ndarray
    ln_attn_shift: np.ndarray
    attn: MhaWeights
    ln_mlp_gain: np.ndarray
    ln_mlp_shift: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray


@dataclass(eq=False)
class CrossWeights:
    """One pre-LN cross-attention sublayer (separate norms for each side)."""

    ln_q_gain: np.ndarray
    ln_q_shift: np.ndarray
    ln_kv_gain: np.ndarray
    ln_kv_shift: np.ndarray
    attn: MhaWeights


@dataclass(eq=False)
class DecoderUnitWeights:
    read_state: CrossWeights
    frame_block: BlockWeights
    global_block: BlockWeights
    update_state: CrossWeights


@dataclass(frozen=True)
class DecoderConfig:
    channels: int = 64
    heads: int = 4
    depth: int = 2
    state_tokens: int = 16
    window_size: int = 4
    mlp_ratio: int = 4
    slot_embedding: bool = True


@dataclass(eq=False)
class DecoderWeights:
    config: DecoderConfig
    camera_token: np.ndarray
    state_init: np.ndarray
    slot_embed: np.ndarray
    units: list[DecoderUnitWeights] = field(default_factory=list)


def _init_block(rng, dim: int, heads: int, mlp_ratio: int) -> BlockWeights:
    hidden = dim * mlp_ratio
    return BlockWeights(
        np.ones(dim), np.zeros(dim), init_mha_weights(rng, dim, heads),
        np.ones(dim), np.zeros(dim),
        truncated_normal(rng, (dim, hidden)), np.zeros(hidden),
        truncated_normal(rng, (hidden, dim)), np.zeros(dim),
    )


def _init_cross(rng, dim: int, heads: int) -> CrossWeights:
    return CrossWeights(np.ones(dim), np.zeros(dim), np.ones(dim), np.zeros(dim),
                        init_mha_weights(rng, dim, heads))


def init_decoder_weights(seed: int, config: DecoderConfig) -> DecoderWeights:
    rng = seeded_rng(seed)
    c = config.channels
    units = [
        DecoderUnitWeights(
            _init_cross(rng, c, config.heads),
            _init_block(rng, c, config.heads, config.mlp_ratio),
            _init_block(rng, c, config.heads, config.mlp_ratio),
            _init_cross(rng, c, config.heads),
        )
        for _ in range(config.depth)
    ]
    return DecoderWeights(
        config=config,
        camera_token=truncated_normal(rng, (c,)),
        state_init=truncated_normal(rng, (config.state_tokens, c)),
        slot_embed=truncated_normal(rng, (config.window_size, c)),
        units=units,
    )


def attention_block(x: np.ndarray, w: BlockWeights,
                    mask: Optional[AttentionMask] = None) -> np.ndarray:
    """Pre-LN self-attention + MLP residual block."""
    n = layer_norm(x, w.ln_attn_gain, w.ln_attn_shift)
    x = x + mha(n, n, n, mask, w.attn)
    h = layer_norm(x, w.ln_mlp_gain, w.ln_mlp_shift)
    return x + linear(gelu(linear(h, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2)


def _cross(q: np.ndarray, kv: np.ndarray, w: CrossWeights) -> np.ndarray:
    qn = layer_norm(q, w.ln_q_gain, w.ln_q_shift)
    kn = layer_norm(kv, w.ln_kv_gain, w.ln_kv_shift)
    return q + mha(qn, kn, kn, None, w.attn)


@dataclass(eq=False)
class DecoderOutput:
    global_tokens: np.ndarray  # (w, tokens_per_frame + 1, C)
    local_tokens: np.ndarray
    state: np.ndarray          # (state_tokens, C)


def decoder_forward(frame_tokens, state, weights: DecoderWeights) -> DecoderOutput:
    """Run the alternating-attention decoder over one window.

    ``frame_tokens`` has shape (window_size, tokens_per_frame + 1, channels)
    with each frame's camera token in row 0. Returns global- and local-branch
    copies of every token plus the updated state tokens.
    """
    x = np.asarray(frame_tokens, dtype=float)
    cfg = weights.config
    if x.ndim != 3 or x.shape[0] != cfg.window_size or x.shape[2] != cfg.channels:
        raise ShapeError(
            f"expected ({cfg.window_size}, tokens, {cfg.channels}) window tokens, got {x.shape}")
    state = np.asarray(state, dtype=float)
    if state.shape != weights.state_init.shape:
        raise ShapeError(f"state shape {state.shape} does not match {weights.state_init.shape}")

    w_frames, per_frame, c = x.shape
    if not weights.units:
        return DecoderOutput(x.copy(), x.copy(), state.copy())

    x = x.copy()
    if cfg.slot_embedding:
        x = x + weights.slot_embed[:, None, :]
    local = x
    for unit in weights.units:
        flat = x.reshape(w_frames * per_frame, c)
        flat = _cross(flat, state, unit.read_state)
        x = flat.reshape(w_frames, per_frame, c)
        for f in range(w_frames):
            x[f] = attention_block(x[f], unit.frame_block)
        local = x.copy()
        flat = attention_block(x.reshape(w_frames * per_frame, c), unit.global_block)
        x = flat.reshape(w_frames, per_frame, c)
        state = _cross(state, flat, unit.update_state)
    return DecoderOutput(x.copy(), local, state)
