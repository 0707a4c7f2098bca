"""ROI placement from facial landmarks.

The 84-point landmark convention used by the default layout (0-based point
indices; "right" is the subject's right, i.e. the left side of the image)::

    0-9    right eyebrow, 0 outer corner, 4 middle, 9 inner corner
    10-19  left eyebrow, 10 inner corner, 15 middle, 19 outer corner
    20-27  right eye, 20 outer corner, 24 inner corner
    28-35  left eye, 28 inner corner, 32 outer corner
    36-47  nose, 36-39 bridge top to tip, 40-43 right side, 44-47 left side
    48-63  outer lip contour, 48 right corner, 50/54 upper lip, 56 left corner
    64-71  inner lip contour
    72-83  jaw line

Trackers with another convention supply their own layout file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .dataio import DatasetConfig, N_LANDMARKS, read_key_values
from .exceptions import DegenerateFaceError, FormatError, RoiOutOfFrameError

ROLES = ("eyebrow", "mouth", "nose_reference")
N_ROIS = 12


class LayoutEntry(NamedTuple):
    roi_id: int
    landmarks: tuple[int, ...]
    role: str


@dataclass(frozen=True)
class RoiLayoutMap:
    """Which landmarks (averaged when two are given) centre each of the 12 ROIs."""

    entries: tuple[LayoutEntry, ...]
    inner_eye: tuple[int, int] = (24, 28)

    def __post_init__(self):
        ids = sorted(e.roi_id for e in self.entries)
        if ids != list(range(N_ROIS)):
            raise FormatError(f"layout must define ROI ids 0..{N_ROIS - 1} exactly once")
        for e in self.entries:
            if e.role not in ROLES:
                raise FormatError(f"ROI {e.roi_id}: unknown role {e.role!r}")
            if not 1 <= len(e.landmarks) <= 2:
                raise FormatError(f"ROI {e.roi_id}: give one or two landmark indices")
            if any(not 0 <= i < N_LANDMARKS for i in e.landmarks):
                raise FormatError(f"ROI {e.roi_id}: landmark index out of range")
        if sum(e.role == "nose_reference" for e in self.entries) != 2:
            raise FormatError("layout needs exactly two nose_reference ROIs")
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(e.role for e in self.entries)

    @property
    def nose_ids(self) -> tuple[int, ...]:
        return tuple(e.roi_id for e in self.entries if e.role == "nose_reference")


DEFAULT_LAYOUT = RoiLayoutMap(
    entries=(
        LayoutEntry(0, (0,), "eyebrow"),
        LayoutEntry(1, (9,), "eyebrow"),
        LayoutEntry(2, (10,), "eyebrow"),
        LayoutEntry(3, (19,), "eyebrow"),
        LayoutEntry(4, (48,), "mouth"),
        LayoutEntry(5, (56,), "mouth"),
        LayoutEntry(6, (4,), "eyebrow"),
        LayoutEntry(7, (15,), "eyebrow"),
        LayoutEntry(8, (50,), "mouth"),
        LayoutEntry(9, (54,), "mouth"),
        LayoutEntry(10, (41,), "nose_reference"),
        LayoutEntry(11, (45,), "nose_reference"),
    ),
    inner_eye=(24, 28),
)


def load_layout(path) -> RoiLayoutMap:
    """Read ``roi.<id> = <idx>[,<idx2>] <role>`` lines (plus optional ``inner_eye = i,j``)."""
    entries = []
    inner_eye = DEFAULT_LAYOUT.inner_eye
    for lineno, key, value in read_key_values(path):
        try:
            if key == "inner_eye":
                a, b = (int(v) for v in value.split(","))
                inner_eye = (a, b)
            elif key.startswith("roi."):
                idx_text, role = value.split()
                landmarks = tuple(int(v) for v in idx_text.split(","))
                entries.append(LayoutEntry(int(key[4:]), landmarks, role))
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError:
            raise FormatError(f"{path}:{lineno}: cannot parse {key} = {value}") from None
    return RoiLayoutMap(tuple(entries), inner_eye)


def dump_layout(layout: RoiLayoutMap) -> str:
    lines = [f"inner_eye = {layout.inner_eye[0]},{layout.inner_eye[1]}"]
    for e in layout.entries:
        lines.append(f"roi.{e.roi_id} = {','.join(map(str, e.landmarks))} {e.role}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RoiRect:
    """Square ROI; ``x0``/``y0`` are the 1-based column/row of its top-left pixel."""

    roi_id: int
    role: str
    center: tuple[float, float]
    side: int
    x0: int
    y0: int

    @property
    def x1(self) -> int:
        return self.x0 + self.side - 1

    @property
    def y1(self) -> int:
        return self.y0 + self.side - 1

    @property
    def slices(self) -> tuple[slice, slice]:
        """0-based ``(rows, cols)`` slices into a frame array."""
        return slice(self.y0 - 1, self.y1), slice(self.x0 - 1, self.x1)


@dataclass(frozen=True)
class RoiTrack:
    """Pixels of one ROI over a window, one flattened ``side*side`` row per frame."""

    rect: RoiRect
    pixels: np.ndarray

    def __len__(self):
        return self.pixels.shape[0]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def inner_eye_distance(landmarks: np.ndarray, layout: RoiLayoutMap = DEFAULT_LAYOUT) -> float:
    a, b = layout.inner_eye
    dist = float(np.hypot(*(landmarks[a] - landmarks[b])))
    if dist == 0.0:
        raise DegenerateFaceError("inner eye corners coincide")
    return dist


def roi_side(L: float, config: Optional[DatasetConfig] = None) -> int:
    """ROI side: the configured fixed size, else ``round(L / 5)`` with a floor of 4."""
    if config is not None and config.size_roi is not None:
        return config.size_roi
    if not L > 0:
        raise ValueError("inner eye distance must be positive")
    return max(4, _round_half_up(L / 5.0))


def _place(center: float, side: int, limit: int) -> int:
    start = _round_half_up(center) - (side - 1) // 2
    return min(max(start, 1), limit - side + 1)


def roi_layout(
    landmarks: np.ndarray,
    side: int,
    layout: RoiLayoutMap = DEFAULT_LAYOUT,
    frame_dims: Sequence[int] = (480, 640),
) -> list[RoiRect]:
    """The 12 ROI squares for one window, clamped inside ``frame_dims = (height, width)``."""
    height, width = frame_dims
    if side > width or side > height:
        raise RoiOutOfFrameError(f"ROI side {side} does not fit a {width}x{height} frame")
    rects = []
    for e in layout.entries:
        cx, cy = np.mean(landmarks[list(e.landmarks)], axis=0)
        rects.append(RoiRect(e.roi_id, e.role, (float(cx), float(cy)), side,
                             _place(cx, side, width), _place(cy, side, height)))
    return rects


def extract_roi_track(frames: np.ndarray, rect: RoiRect) -> RoiTrack:
    """Cut ``rect`` out of every frame of a ``(N, H, W)`` window, row-major flattened."""
    rows, cols = rect.slices
    patch = np.asarray(frames)[:, rows, cols]
    return RoiTrack(rect, patch.reshape(patch.shape[0], -1))
