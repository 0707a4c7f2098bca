"""LBP-chi2 spotter: uniform LBP histograms over a 6x6 block grid, chi2 feature
differences across an interval, contrasting, thresholding and peak selection
inside every sub-video.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .dataio import DatasetConfig, FrameSequence, LandmarkTrack
from .exceptions import BlockTooSmallError, DimensionMismatchError, VideoTooShortError
from .fusion import SpottedInterval
from .windowing import WindowSpan, segment_video

GRID = 6
OVERLAP_X = 0.2
OVERLAP_Y = 0.3


def _transitions(code: int, p: int) -> int:
    bits = [(code >> k) & 1 for k in range(p)]
    return sum(bits[k] != bits[(k + 1) % p] for k in range(p))


@lru_cache(maxsize=None)
def uniform_mapping(p: int = 8) -> np.ndarray:
    """Lookup table from a ``p``-bit LBP code to its bin.

    Uniform codes (at most two circular 0/1 transitions) get bins ``0..`` in
    increasing code order, every other code shares the last bin.
    """
    table = np.empty(1 << p, dtype=np.intp)
    uniform = [c for c in range(1 << p) if _transitions(c, p) <= 2]
    table[:] = len(uniform)
    table[uniform] = np.arange(len(uniform))
    table.setflags(write=False)
    return table


def n_bins(p: int = 8) -> int:
    return p * (p - 1) + 3


def neighbor_offsets(r: float = 3, p: int = 8) -> list[tuple[float, float]]:
    """``(dy, dx)`` of the ``p`` circular sampling points, counter-clockwise from the right."""
    out = []
    for k in range(p):
        angle = 2.0 * np.pi * k / p
        dy = round(-r * np.sin(angle), 12)
        dx = round(r * np.cos(angle), 12)
        out.append((dy + 0.0, dx + 0.0))
    return out


def _sample(img: np.ndarray, r: int, dy: float, dx: float) -> np.ndarray:
    """Bilinear samples at offset ``(dy, dx)`` for every pixel at least ``r`` from the border.

    Written as two nested lerps so a constant image samples to exactly its value.
    """
    h, w = img.shape
    y0, x0 = int(np.floor(dy)), int(np.floor(dx))
    fy, fx = dy - y0, dx - x0
    y1 = y0 + 1 if fy > 0 else y0
    x1 = x0 + 1 if fx > 0 else x0

    def at(oy, ox):
        return img[r + oy:h - r + oy, r + ox:w - r + ox]

    top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0))
    bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0))
    return top + fy * (bottom - top)


def lbp_codes(image: np.ndarray, r: int = 3, p: int = 8) -> np.ndarray:
    """Uniform-LBP bin of every pixel lying at least ``r`` pixels inside the image."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    if h < 2 * r + 1 or w < 2 * r + 1:
        raise BlockTooSmallError(f"a {w}x{h} block has no pixel {r} away from its border")
    center = img[r:h - r, r:w - r]
    codes = np.zeros(center.shape, dtype=np.intp)
    for k, (dy, dx) in enumerate(neighbor_offsets(r, p)):
        codes |= (_sample(img, r, dy, dx) >= center).astype(np.intp) << k
    return uniform_mapping(p)[codes]


def lbp_histogram(block: np.ndarray, r: int = 3, p: int = 8) -> np.ndarray:
    """Normalised uniform-LBP histogram (``p*(p-1)+3`` bins) of a block."""
    codes = lbp_codes(block, r, p)
    hist = np.bincount(codes.ravel(), minlength=n_bins(p)).astype(np.float64)
    return hist / hist.sum()


def chi2_distance(h1: np.ndarray, h2: np.ndarray) -> float:
    """``sum (h1-h2)^2 / (h1+h2)``; bins empty in both histograms contribute nothing."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise DimensionMismatchError(f"histogram lengths differ: {h1.shape} vs {h2.shape}")
    den = h1 + h2
    nz = den > 0
    return float(np.sum((h1[nz] - h2[nz]) ** 2 / den[nz]))


def _chi2_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    den = a + b
    num = (a - b) ** 2
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0).sum(axis=1)


class Block(NamedTuple):
    """Half-open 0-based pixel box ``[y0, y1) x [x0, x1)``."""

    y0: int
    y1: int
    x0: int
    x1: int


@dataclass(frozen=True)
class BlockGrid:
    """6x6 overlapping blocks laid over a face box (0-based, half-open)."""

    face: Block
    blocks: tuple[Block, ...]
    overlap_x: float = OVERLAP_X
    overlap_y: float = OVERLAP_Y


def _axis_blocks(start: int, length: int, overlap: float, n: int = GRID):
    size = length / (n - (n - 1) * overlap)
    stride = size * (1.0 - overlap)
    edges = []
    for i in range(n):
        lo = start + int(np.floor(i * stride + 0.5))
        hi = start + int(np.floor(i * stride + size + 0.5))
        edges.append((lo, min(hi, start + length)))
    return edges


def block_grid(face: Block, overlap_x: float = OVERLAP_X, overlap_y: float = OVERLAP_Y,
               r: int = 3) -> BlockGrid:
    ys = _axis_blocks(face.y0, face.y1 - face.y0, overlap_y)
    xs = _axis_blocks(face.x0, face.x1 - face.x0, overlap_x)
    blocks = tuple(Block(y0, y1, x0, x1) for y0, y1 in ys for x0, x1 in xs)
    for b in blocks:
        if b.y1 - b.y0 < 2 * r + 1 or b.x1 - b.x0 < 2 * r + 1:
            raise BlockTooSmallError(
                f"face box {face} gives {b.x1 - b.x0}x{b.y1 - b.y0} blocks, need {2 * r + 1}"
            )
    return BlockGrid(face, blocks, overlap_x, overlap_y)


def face_box(landmarks: np.ndarray, frame_dims: Sequence[int], expand: float = 0.1) -> Block:
    """Bounding box of all landmarks grown on every side by ``expand`` of its size, clipped to the frame.

    Landmarks are 1-based pixel coordinates; the box is returned 0-based.
    """
    height, width = frame_dims
    lo = landmarks.min(axis=0) - 1.0
    hi = landmarks.max(axis=0) - 1.0
    pad = (hi - lo) * expand
    x0, y0 = np.floor(lo - pad).astype(int)
    x1, y1 = np.ceil(hi + pad).astype(int) + 1
    return Block(max(0, y0), min(height, y1), max(0, x0), min(width, x1))


def frame_features(frame: np.ndarray, grid: BlockGrid, r: int = 3, p: int = 8) -> np.ndarray:
    """Concatenated block histograms of one frame, ``36 * 59`` values.

    Codes are computed once over the face box; a block histogram uses the
    codes of the block's own interior pixels, which only see pixels inside
    the block, so it equals ``lbp_histogram`` of the cropped block.
    """
    f = grid.face
    codes = lbp_codes(np.asarray(frame)[f.y0:f.y1, f.x0:f.x1], r, p)
    nb = n_bins(p)
    out = np.empty((len(grid.blocks), nb))
    for i, b in enumerate(grid.blocks):
        sub = codes[b.y0 - f.y0:b.y1 - f.y0 - 2 * r, b.x0 - f.x0:b.x1 - f.x0 - 2 * r]
        hist = np.bincount(sub.ravel(), minlength=nb)
        out[i] = hist / hist.sum()
    return out.ravel()


@dataclass(frozen=True)
class DifferenceCurve:
    """Raw (``D``) and contrasted (``C``) feature differences, entry 0 is ``first_index``."""

    D: np.ndarray
    C: np.ndarray
    L_interval: int
    first_index: int = 1

    def __len__(self):
        return self.C.size

    @property
    def valid(self) -> tuple[int, int]:
        """Frames with a defined difference, ``[first+L, last-L]``."""
        return self.first_index + self.L_interval, self.first_index + len(self) - 1 - self.L_interval


def difference_curve(features: np.ndarray, L_interval: int, first_index: int = 1) -> DifferenceCurve:
    """Difference of each frame to the average of the frames ``L_interval`` before and after.

    ``D_i = chi2(F_i, (F_{i-L} + F_{i+L}) / 2)`` is defined on ``[L+1, T-L]``
    and 0 elsewhere.  The contrasted value ``C_i = max(0, D_i - (D_{i-L} +
    D_{i+L}) / 2)`` averages only the neighbours that are defined, so a
    frame near either end is compared with its one inner neighbour instead of
    with an artificial zero.
    """
    F = np.asarray(features, dtype=np.float64)
    T, L = F.shape[0], L_interval
    if T <= 2 * L:
        raise VideoTooShortError(f"need more than {2 * L} frames, got {T}")
    D = np.zeros(T)
    D[L:T - L] = _chi2_rows(F[L:T - L], 0.5 * (F[:T - 2 * L] + F[2 * L:]))
    defined = np.zeros(T + 2 * L)
    defined[2 * L:T] = 1.0
    padded = np.concatenate([np.zeros(L), D, np.zeros(L)])
    idx = np.arange(L, T - L)
    total = padded[idx] + padded[idx + 2 * L]
    count = defined[idx] + defined[idx + 2 * L]
    neighbours = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    C = np.zeros(T)
    C[L:T - L] = np.maximum(0.0, D[L:T - L] - neighbours)
    return DifferenceCurve(D, C, L, first_index)


def spot_peaks(curve: DifferenceCurve, spans: Sequence[WindowSpan], tau: float,
               L_interval: Optional[int] = None, video_id: str = "") -> list[SpottedInterval]:
    """Pick the strongest movement of every sub-video and keep it when above threshold.

    Each span is judged on its own: its threshold is
    ``mean(C) + tau * (max(C) - mean(C))`` over the span's frames, so a weak
    movement is not drowned by a larger one elsewhere in the video.  The peak
    emits ``[peak - L, peak + L]`` clipped to the video.  Emissions within
    ``2 * L`` of a stronger one (e.g. the same peak found by two overlapping
    spans) are absorbed by it, so the output intervals are disjoint.
    """
    L = curve.L_interval if L_interval is None else L_interval
    C = curve.C
    first = curve.first_index
    last = first + len(C) - 1
    if C.size == 0 or C.max() <= 0:
        return []
    peaks = {}
    for span in spans:
        seg = C[max(0, span.start - first):span.end - first + 1]
        if seg.size == 0:
            continue
        k = int(np.argmax(seg))
        threshold = seg.mean() + tau * (seg[k] - seg.mean())
        if seg[k] > threshold:
            frame = max(first, span.start) + k
            peaks[frame] = float(seg[k])
    kept: list[tuple[int, float]] = []
    for frame, score in sorted(peaks.items(), key=lambda kv: (-kv[1], kv[0])):
        if all(abs(frame - other) > 2 * L for other, _ in kept):
            kept.append((frame, score))
    return [SpottedInterval(video_id, max(first, f - L), min(last, f + L), s, "lbp_chi2")
            for f, s in sorted(kept)]


def video_features(video: FrameSequence, landmarks: LandmarkTrack, r: int = 3, p: int = 8,
                   expand: float = 0.1) -> np.ndarray:
    """``(T, 36*59)`` LBP features on the face box of the video's first frame."""
    face = face_box(landmarks.at(video.first_index), (video.height, video.width), expand)
    grid = block_grid(face, r=r)
    return np.stack([frame_features(f, grid, r, p) for f in video.frames])


def write_curve_csv(path, curves: Sequence[tuple[str, DifferenceCurve]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "frame", "D", "C"])
        for video_id, curve in curves:
            for i, (d, c) in enumerate(zip(curve.D, curve.C)):
                writer.writerow([video_id, curve.first_index + i, repr(float(d)), repr(float(c))])


class LbpChi2Spotter(BaseEstimator):
    """Unsupervised LBP-chi2 spotter with the estimator interface.

    ``fit`` only validates parameters; ``predict`` maps ``(FrameSequence,
    LandmarkTrack)`` pairs to spotted intervals.  ``tau=None`` takes the
    configuration's peak threshold.
    """

    def __init__(self, config: DatasetConfig, tau: Optional[float] = None, radius: int = 3,
                 n_points: int = 8, face_expand: float = 0.1):
        self.config = config
        self.tau = tau
        self.radius = radius
        self.n_points = n_points
        self.face_expand = face_expand

    def fit(self, X=None, y=None):
        tau = self._tau()
        if not 0 <= tau <= 1:
            raise ValueError(f"tau must lie in [0, 1], got {tau}")
        self.tau_ = tau
        return self

    def _tau(self):
        return self.config.peak_threshold_tau if self.tau is None else self.tau

    def curve(self, video: FrameSequence, landmarks: LandmarkTrack) -> DifferenceCurve:
        feats = video_features(video, landmarks, self.radius, self.n_points, self.face_expand)
        return difference_curve(feats, self.config.L_interval, video.first_index)

    def spot(self, video: FrameSequence, landmarks: LandmarkTrack) -> list[SpottedInterval]:
        curve = self.curve(video, landmarks)
        spans = segment_video(len(video), self.config, video.first_index)
        return spot_peaks(curve, spans, self._tau(), self.config.L_interval, video.video_id)

    def predict(self, X) -> list[SpottedInterval]:
        out = []
        for video, landmarks in X:
            out.extend(self.spot(video, landmarks))
        return out
