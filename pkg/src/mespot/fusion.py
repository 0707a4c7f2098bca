"""From per-ROI LTP classifications to spotted intervals.

Three steps turn local decisions into facial ones: positives without real
motion amplitude are dropped, instants are kept only when a non-nose ROI fires
while both nose references stay quiet and the motion is not spread over most
of the face, and surviving instants are expanded to ME-length intervals and
merged.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import FormatError

SOURCES = ("ltp_ml", "lbp_chi2")


@dataclass(frozen=True, order=True)
class SpottedInterval:
    video_id: str
    onset: int
    offset: int
    score: float = field(default=0.0, compare=False)
    source: str = field(default="ltp_ml", compare=False)

    def __post_init__(self):
        if self.onset > self.offset:
            raise ValueError(f"onset {self.onset} after offset {self.offset}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")


def intervals_to_csv(intervals: Iterable[SpottedInterval]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["video_id", "onset", "offset", "score", "source"])
    for s in intervals:
        writer.writerow([s.video_id, s.onset, s.offset, repr(float(s.score)), s.source])
    return buf.getvalue()


def read_intervals_csv(path) -> list[SpottedInterval]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or (lineno == 1 and row[0].strip() == "video_id"):
                continue
            if len(row) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                out.append(SpottedInterval(row[0].strip(), int(row[1]), int(row[2]),
                                           float(row[3]), row[4].strip()))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class FusionParams:
    """Thresholds of the three fusion steps.

    ``t_tol`` and ``merge_gap`` of ``None`` derive from ``L_interval``
    (``round(L/3)`` and ``ceil(L/2)``).  ``a_min`` is the relative raw
    amplitude a positive needs (see :func:`local_qualification`); 0 turns
    that check off.
    """

    d_min: float = 0.2
    t_tol: Optional[int] = None
    k_max: int = 6
    merge_gap: Optional[int] = None
    nose_veto: bool = True
    a_min: float = 0.1

    def tolerance(self, L_interval: int) -> int:
        if self.t_tol is not None:
            return self.t_tol
        return int(math.floor(L_interval / 3 + 0.5))

    def gap(self, L_interval: int) -> int:
        return self.merge_gap if self.merge_gap is not None else math.ceil(L_interval / 2)


def local_qualification(positive: np.ndarray, distances: np.ndarray, cn: np.ndarray,
                        d_min: float = 0.2, a_min: float = 0.0) -> np.ndarray:
    """Keep positives whose pattern reaches ``d_min`` in an ROI that moved at all.

    ``positive`` is an ``(R, K)`` boolean mask of classifier decisions,
    ``distances`` the ``(R, K, L-1)`` normalised patterns, ``cn`` the ``(R,)``
    normalisation coefficients.  With ``a_min > 0`` a positive must also
    carry raw amplitude ``cn * max d`` of at least ``a_min`` times the largest
    ``cn`` of the video, which silences ROIs that only ever saw sensor noise.
    """
    positive = np.asarray(positive, dtype=bool)
    distances = np.asarray(distances)
    cn = np.asarray(cn, dtype=float)
    peak = distances.max(axis=2) if distances.size else np.zeros(positive.shape)
    keep = positive & (peak >= d_min) & (cn > 0)[:, None]
    if a_min > 0 and cn.size:
        keep &= peak * cn[:, None] >= a_min * cn.max()
    return keep


def roi_activity(qualified: np.ndarray, frames: np.ndarray, first: int, last: int) -> np.ndarray:
    """Collapse ``(R, K)`` row decisions onto video frames: ``(R, last-first+1)`` booleans."""
    active = np.zeros((qualified.shape[0], last - first + 1), dtype=bool)
    for r in range(qualified.shape[0]):
        active[r, np.asarray(frames)[qualified[r]] - first] = True
    return active


def _dilate(active: np.ndarray, tol: int) -> np.ndarray:
    if tol <= 0:
        return active.copy()
    padded = np.pad(active, ((0, 0), (tol, tol)))
    out = np.zeros_like(active)
    for shift in range(2 * tol + 1):
        out |= padded[:, shift:shift + active.shape[1]]
    return out


def spatial_fusion(active: np.ndarray, roles: Sequence[str], t_tol: int,
                   k_max: int = 6, nose_veto: bool = True, first: int = 1) -> list[int]:
    """Frames at which the face shows a local, non-rigid movement.

    ``active`` is the ``(R, T)`` per-frame activity of each ROI (column 0 is
    frame ``first``).  A frame is a candidate when a non-nose ROI is active at
    it, no nose reference is active within ``t_tol`` frames, and at most
    ``k_max`` ROIs are active within ``t_tol`` frames.
    """
    active = np.asarray(active, dtype=bool)
    nose = np.array([r == "nose_reference" for r in roles])
    near = _dilate(active, t_tol)
    cand = active[~nose].any(axis=0)
    if nose_veto and nose.any():
        cand &= ~near[nose].any(axis=0)
    cand &= near.sum(axis=0) <= k_max
    return [int(i) + first for i in np.flatnonzero(cand)]


def merge_intervals(instants: Iterable[int], L_interval: int, bounds: tuple[int, int],
                    video_id: str = "", gap: Optional[int] = None,
                    source: str = "ltp_ml") -> list[SpottedInterval]:
    """Expand instants to ``[n, n+L-1]`` and merge intervals at most ``gap`` frames apart.

    The gap counts the frames strictly between two intervals; the score is the
    number of instants that went into an interval.
    """
    gap = math.ceil(L_interval / 2) if gap is None else gap
    lo, hi = bounds
    out = []
    cur = None
    for n in sorted(instants):
        on, off = max(lo, n), min(hi, n + L_interval - 1)
        if on > off:
            continue
        if cur is not None and on - cur[1] - 1 <= gap:
            cur = [cur[0], max(cur[1], off), cur[2] + 1]
        else:
            if cur is not None:
                out.append(cur)
            cur = [on, off, 1]
    if cur is not None:
        out.append(cur)
    return [SpottedInterval(video_id, on, off, float(k), source) for on, off, k in out]


def fuse(positive: np.ndarray, feature_set, L_interval: int,
         params: FusionParams = FusionParams()) -> list[SpottedInterval]:
    """Run the three fusion steps on one video's classifier decisions."""
    first = int(feature_set.frames.min()) if feature_set.frames.size else 1
    last = first + feature_set.n_frames - 1
    qualified = local_qualification(positive, feature_set.distances, feature_set.cn,
                                     params.d_min, params.a_min)
    active = roi_activity(qualified, feature_set.frames, first, last)
    instants = spatial_fusion(active, feature_set.roles, params.tolerance(L_interval),
                              params.k_max, params.nose_veto, first)
    return merge_intervals(instants, L_interval, (first, last), feature_set.video_id,
                           params.gap(L_interval))
