"""Video segmentation into overlapping sub-sequences and ROI window arithmetic."""

from __future__ import annotations

from typing import NamedTuple

from .dataio import DatasetConfig


class WindowSpan(NamedTuple):
    """Inclusive 1-based frame range ``[start, end]`` of sub-sequence ``index_m``."""

    start: int
    end: int
    index_m: int

    def __len__(self):
        return self.end - self.start + 1

    def __contains__(self, frame):
        return self.start <= frame <= self.end


def segment_video(n_frames: int, config: DatasetConfig, first_index: int = 1) -> list[WindowSpan]:
    """Split ``n_frames`` frames into spans of ``L_window`` frames.

    Consecutive spans start ``L_window - L_overlap`` frames apart.  A span that
    would run past the last frame is replaced by the full-length span ending
    on the last frame, so every span but a too-short video's only span holds
    exactly ``L_window`` frames.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    last = first_index + n_frames - 1
    spans = []
    start = first_index
    while True:
        end = start + config.L_window - 1
        if end >= last:
            spans.append(WindowSpan(max(first_index, last - config.L_window + 1), last, len(spans)))
            return spans
        spans.append(WindowSpan(start, end, len(spans)))
        start += config.stride


def roi_window(n: int, n_frames: int, L_interval: int) -> tuple[int, int]:
    """Frames covered by the ROI analysis window starting at ``n`` (shrinks at the tail)."""
    return n, min(n + L_interval - 1, n_frames)


def roi_window_starts(n_frames: int, L_interval: int) -> list[int]:
    if n_frames < 1:
        raise ValueError("need at least one frame")
    return list(range(1, n_frames + 1))
