"""Local temporal patterns (LTP) of facial ROIs.

Each ROI sequence of a sub-video is projected on its first two temporal
principal components; the feature of frame ``n`` is the set of 2-D distances
between ``P_n`` and the following points of an ME-length window, normalised
by the largest such distance seen in that ROI over the whole video.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .dataio import DatasetConfig, FrameSequence, LandmarkTrack
from .exceptions import TooFewFramesError
from .geometry import (
    DEFAULT_LAYOUT,
    RoiLayoutMap,
    RoiTrack,
    extract_roi_track,
    inner_eye_distance,
    roi_layout,
    roi_side,
)
from .windowing import segment_video

# components whose eigenvalue falls below this fraction of the largest are
# treated as absent (zero basis row) so that noise is never amplified
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ProjectedTrack:
    points: np.ndarray  # (N, 2)
    basis: np.ndarray  # (2, a*a), rows orthonormal or zero
    mean: np.ndarray  # (a*a,)
    variance_captured: float

    def __len__(self):
        return self.points.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.points @ self.basis + self.mean


def _fix_signs(basis):
    for row in basis:
        k = np.argmax(np.abs(row))
        if row[k] < 0:
            row *= -1.0
    return basis


def temporal_pca(track, n_components: int = 2) -> ProjectedTrack:
    """Project every frame of an ROI track on its top temporal principal directions.

    ``track`` is a :class:`RoiTrack` or an ``(N, D)`` array of flattened
    frames.  The eigenproblem is solved on the ``N x N`` Gram matrix when
    there are fewer frames than pixels, else on the ``D x D`` covariance.
    """
    pixels = track.pixels if isinstance(track, RoiTrack) else track
    X = np.asarray(pixels, dtype=np.float64)
    n, dim = X.shape
    if n < 2:
        raise TooFewFramesError(f"temporal PCA needs at least 2 frames, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    total = float(np.einsum("ij,ij->", Xc, Xc))
    basis = np.zeros((n_components, dim))
    if total == 0.0:
        return ProjectedTrack(np.zeros((n, n_components)), basis, mean, 1.0)

    if n < dim:
        evals, evecs = np.linalg.eigh(Xc @ Xc.T)
    else:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc)
    order = np.argsort(evals)[::-1][:n_components]
    top = evals[order]
    kept = 0.0
    for k, (lam, idx) in enumerate(zip(top, order)):
        if lam <= _RANK_TOL * top[0]:
            continue
        if n < dim:
            basis[k] = Xc.T @ evecs[:, idx] / np.sqrt(lam)
        else:
            basis[k] = evecs[:, idx]
        kept += lam
    _fix_signs(basis)
    points = Xc @ basis.T
    return ProjectedTrack(points, basis, mean, min(1.0, kept / total))


def distance_pattern(proj: ProjectedTrack, n: int, L_interval: int) -> np.ndarray:
    """Raw distances ``|P_n - P_{n+w}|`` for ``w = 1 .. L_interval-1`` (1-based ``n``).

    The vector is truncated where the window runs past the last point.
    """
    points = proj.points if isinstance(proj, ProjectedTrack) else np.asarray(proj)
    if not 1 <= n <= len(points):
        raise IndexError(f"start {n} outside 1..{len(points)}")
    ahead = points[n:n + L_interval - 1]
    return np.hypot(*(ahead - points[n - 1]).T)


def distance_matrix(points: np.ndarray, L_interval: int) -> np.ndarray:
    """Distance patterns of every start frame, ``(N, L_interval-1)``, zero padded at the tail."""
    n = len(points)
    out = np.zeros((n, L_interval - 1))
    for w in range(1, min(L_interval, n)):
        diff = points[w:] - points[:-w]
        out[: n - w, w - 1] = np.hypot(diff[:, 0], diff[:, 1])
    return out


@dataclass(frozen=True)
class LtpFeature:
    roi_id: int
    frame_n: int
    cn: float
    distances: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(([self.cn], self.distances))


def _normalize(raw: np.ndarray) -> tuple[float, np.ndarray]:
    cn = float(raw.max()) if raw.size else 0.0
    if cn == 0.0:
        return 0.0, np.zeros_like(raw)
    return cn, raw / cn


def normalize_roi(patterns: Sequence[np.ndarray], roi_id: int = 0,
                  length: Optional[int] = None) -> list[LtpFeature]:
    """Divide every raw pattern of one ROI by the largest distance of the ROI.

    Patterns shorter than ``length`` (tail windows) are zero padded.
    """
    if not patterns:
        raise ValueError("need at least one pattern")
    length = length or max(len(p) for p in patterns)
    raw = np.zeros((len(patterns), length))
    for i, p in enumerate(patterns):
        raw[i, : len(p)] = p
    cn, d = _normalize(raw)
    return [LtpFeature(roi_id, i + 1, cn, row) for i, row in enumerate(d)]


@dataclass(frozen=True)
class LtpFeatureSet:
    """Features of all 12 ROIs of one video.

    Rows follow the sub-video spans in order, so frames in the overlap of two
    spans appear once per span.
    """

    video_id: str
    subject_id: str
    roles: tuple[str, ...]
    frames: np.ndarray  # (K,) global frame index of each row
    spans: np.ndarray  # (K,) span ordinal of each row
    cn: np.ndarray  # (R,)
    distances: np.ndarray  # (R, K, L_interval-1), each in [0, 1]
    n_frames: int = 0

    @property
    def n_rois(self) -> int:
        return len(self.roles)

    def vectors(self) -> np.ndarray:
        """``(R, K, L_interval)`` feature vectors ``[cn, d1, ..., d_{L-1}]``."""
        cn = np.broadcast_to(self.cn[:, None, None], self.distances.shape[:2] + (1,))
        return np.concatenate([cn, self.distances], axis=2)

    def roi_features(self, roi_id: int) -> list[LtpFeature]:
        return [LtpFeature(roi_id, int(f), float(self.cn[roi_id]), d)
                for f, d in zip(self.frames, self.distances[roi_id])]


def extract_ltp_features(
    video: FrameSequence,
    landmarks: LandmarkTrack,
    config: DatasetConfig,
    layout: RoiLayoutMap = DEFAULT_LAYOUT,
) -> LtpFeatureSet:
    spans = segment_video(len(video), config, video.first_index)
    n_rois = len(layout.entries)
    raw_blocks, frame_blocks, span_blocks = [], [], []
    for span in spans:
        lm = landmarks.at(span.start)
        side = roi_side(inner_eye_distance(lm, layout), config)
        rects = roi_layout(lm, side, layout, (video.height, video.width))
        window = video.span(span.start, span.end)
        block = np.zeros((n_rois, len(window), config.L_interval - 1))
        if len(window) >= 2:
            for rect in rects:
                proj = temporal_pca(extract_roi_track(window, rect))
                block[rect.roi_id] = distance_matrix(proj.points, config.L_interval)
        raw_blocks.append(block)
        frame_blocks.append(np.arange(span.start, span.end + 1))
        span_blocks.append(np.full(len(window), span.index_m))
    raw = np.concatenate(raw_blocks, axis=1)
    cn = np.zeros(n_rois)
    dist = np.zeros_like(raw)
    for r in range(n_rois):
        cn[r], dist[r] = _normalize(raw[r])
    return LtpFeatureSet(
        video_id=video.video_id,
        subject_id=video.subject_id,
        roles=layout.roles,
        frames=np.concatenate(frame_blocks),
        spans=np.concatenate(span_blocks),
        cn=cn,
        distances=dist,
        n_frames=len(video),
    )


def write_feature_csv(path, feature_sets: Sequence[LtpFeatureSet]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        width = feature_sets[0].distances.shape[2] if feature_sets else 0
        writer.writerow(["video_id", "roi_id", "global_frame", "cn"]
                        + [f"d{w}" for w in range(1, width + 1)])
        for fs in feature_sets:
            for r in range(fs.n_rois):
                for frame, d in zip(fs.frames, fs.distances[r]):
                    writer.writerow([fs.video_id, r, int(frame), repr(float(fs.cn[r]))]
                                    + [repr(float(v)) for v in d])


class LtpTransformer(TransformerMixin, BaseEstimator):
    """Map ``(FrameSequence, LandmarkTrack)`` pairs to :class:`LtpFeatureSet` objects."""

    def __init__(self, config: DatasetConfig, layout: RoiLayoutMap = DEFAULT_LAYOUT):
        self.config = config
        self.layout = layout

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [extract_ltp_features(frames, landmarks, self.config, self.layout)
                for frames, landmarks in X]
