"""Online sliding-window bookkeeping: emission, final duplication, overlap merge.

Windows hold ``w`` consecutive frames and advance by ``w/2``, so consecutive
windows share half their frames. The first window is emitted once ``w`` frames
arrived, each later one after ``w/2`` more. When the stream ends mid-stride,
one final window is emitted with the last real frame duplicated into the
empty slots; the duplicated slots are flagged and their predictions dropped.

For a frame predicted twice, the later window's pose wins outright and the
point map is merged per pixel, keeping the strictly more confident sample
(confidence ties go to the later prediction).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geomath import Pose
from .validation import OrderingError, ShapeError


@dataclass(frozen=True)
class Window:
    """One emitted window: 1-based index, stream offset of slot 0, frames, flags."""

    index: int
    start: int
    frame_ids: tuple[int, ...]
    duplicated: tuple[bool, ...]


@dataclass(eq=False)
class SlotPrediction:
    """Raw per-slot decoder outputs for one frame occurrence."""

    pose: Pose
    points: np.ndarray
    confidence: np.ndarray


@dataclass(eq=False)
class FramePrediction:
    """Latest merged outputs for one real frame."""

    frame_id: int
    pose: Pose
    points: np.ndarray
    confidence: np.ndarray
    window_index: int
    updated: bool


class StreamState:
    """Single-owner stream bookkeeping; mutate sequentially, windows are immutable."""

    def __init__(self, window_size: int):
        if window_size < 2 or window_size % 2 != 0:
            raise ValueError(f"window_size must be an even count >= 2, got {window_size}")
        self.window_size = window_size
        self.stride = window_size // 2
        self.windows: list[Window] = []
        self._frames: list[int] = []
        self._finalized = False
        self._per_frame: dict[int, FramePrediction] = {}

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    def push_frame(self, frame_id: int) -> Optional[Window]:
        """Buffer one frame; returns a Window exactly when one fills up."""
        if self._finalized:
            raise OrderingError("stream already finalized")
        if self._frames and frame_id <= self._frames[-1]:
            raise OrderingError(
                f"frame ids must increase: got {frame_id} after {self._frames[-1]}")
        self._frames.append(frame_id)
        needed = self.window_size + len(self.windows) * self.stride
        if len(self._frames) == needed:
            return self._emit(len(self.windows) * self.stride, duplicate=False)
        return None

    def finalize(self) -> Optional[Window]:
        """End the stream; emits a last-frame-duplicated window if frames remain uncovered."""
        if self._finalized:
            return None
        self._finalized = True
        if not self._frames:
            return None
        if self.windows:
            covered = self.windows[-1].start + self.window_size
            if len(self._frames) <= covered:
                return None
            start = len(self.windows) * self.stride
        else:
            start = 0
        return self._emit(start, duplicate=True)

    def _emit(self, start: int, duplicate: bool) -> Window:
        ids = self._frames[start:start + self.window_size]
        pad = self.window_size - len(ids)
        if pad and not duplicate:
            raise AssertionError("short window outside finalize")
        flags = [False] * len(ids) + [True] * pad
        ids = ids + [ids[-1]] * pad
        window = Window(len(self.windows) + 1, start, tuple(ids), tuple(flags))
        self.windows.append(window)
        return window

    def merge_overlap(self, window: Window,
                      slot_predictions: Sequence[SlotPrediction]) -> dict[int, FramePrediction]:
        """Fold one window's per-slot predictions into the per-frame outputs.

        Returns the resulting FramePrediction for every real frame in the
        window (duplicated padding slots are discarded).
        """
        if len(slot_predictions) != self.window_size:
            raise ShapeError(
                f"expected {self.window_size} slot predictions, got {len(slot_predictions)}")
        out: dict[int, FramePrediction] = {}
        for frame_id, dup, pred in zip(window.frame_ids, window.duplicated, slot_predictions):
            if dup:
                continue
            old = self._per_frame.get(frame_id)
            if old is None:
                merged = FramePrediction(frame_id, pred.pose, np.array(pred.points, dtype=float),
                                         np.array(pred.confidence, dtype=float),
                                         window.index, updated=False)
            else:
                take_new = pred.confidence >= old.confidence
                merged = FramePrediction(
                    frame_id, pred.pose,
                    np.where(take_new[..., None], pred.points, old.points),
                    np.where(take_new, pred.confidence, old.confidence),
                    window.index, updated=True)
            self._per_frame[frame_id] = merged
            out[frame_id] = merged
        return out

    def outputs(self) -> dict[int, FramePrediction]:
        """Final merged outputs keyed by frame id, in stream order."""
        return dict(self._per_frame)


def expected_window_count(frames: int, window_size: int) -> int:
    """Closed-form window count: ceil((T - w) / (w/2)) + 1 for T >= w, else one."""
    if frames <= 0:
        return 0
    if frames <= window_size:
        return 1
    stride = window_size // 2
    return -(-(frames - window_size) // stride) + 1
