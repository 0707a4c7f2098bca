"""LTP-ML spotting as an estimator, and its leave-one-subject-out evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .classify import LinearSVM, SvmModel, frame_labels, loso_splits
from .dataio import DatasetConfig, GroundTruthInterval, group_by_video
from .fusion import FusionParams, SpottedInterval, fuse
from .geometry import DEFAULT_LAYOUT, RoiLayoutMap
from .ltp import LtpFeatureSet, extract_ltp_features
from .metrics import EvalReport, VideoCounts, evaluate


def training_matrix(feature_sets: Sequence[LtpFeatureSet], ground_truth: Iterable[GroundTruthInterval],
                    L_interval: int, d_min: float = 0.0,
                    dominance: Optional[float] = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Stack every ROI row of every video into ``(X, y)``.

    Annotations do not say which ROI moved, so a positive frame is positive
    in all ROIs.  Positive rows that do not show the movement are left out:
    rows whose normalised pattern stays below ``d_min``, and, with
    ``dominance``, rows whose raw amplitude (``cn * max d``) is below that
    fraction of the strongest ROI at the same row.
    """
    by_video = group_by_video(ground_truth)
    Xs, ys = [], []
    for fs in feature_sets:
        labels = frame_labels(fs.frames, by_video.get(fs.video_id, []), L_interval)
        vectors = fs.vectors()
        y = np.broadcast_to(labels, (fs.n_rois, labels.size))
        peak = fs.distances.max(axis=2)
        shows = peak >= d_min
        if dominance is not None:
            raw = peak * fs.cn[:, None]
            shows &= raw >= dominance * raw.max(axis=0, keepdims=True)
        keep = (y < 0) | shows
        Xs.append(vectors[keep])
        ys.append(y[keep])
    return np.concatenate(Xs), np.concatenate(ys).astype(np.int64)


class LtpMlSpotter(BaseEstimator):
    """LTP features, a linear SVM per ROI row and local-to-global fusion.

    ``X`` items are :class:`LtpFeatureSet` objects or ``(FrameSequence,
    LandmarkTrack)`` pairs; ``fit`` takes the ground-truth intervals of the
    training videos as ``y``.  ``predict`` returns the spotted intervals of
    all videos in ``X``.
    """

    def __init__(self, config: DatasetConfig, layout: RoiLayoutMap = DEFAULT_LAYOUT, C=1.0,
                 class_weight="balanced", random_state=0, d_min=0.2, t_tol=None, k_max=6,
                 merge_gap=None, nose_veto=True, dominance=0.5, a_min=0.1):
        self.config = config
        self.layout = layout
        self.C = C
        self.class_weight = class_weight
        self.random_state = random_state
        self.d_min = d_min
        self.t_tol = t_tol
        self.k_max = k_max
        self.merge_gap = merge_gap
        self.nose_veto = nose_veto
        self.dominance = dominance
        self.a_min = a_min

    def _features(self, X) -> list[LtpFeatureSet]:
        out = []
        for item in X:
            if isinstance(item, LtpFeatureSet):
                out.append(item)
            else:
                frames, landmarks = item
                out.append(extract_ltp_features(frames, landmarks, self.config, self.layout))
        return out

    @property
    def fusion_params(self) -> FusionParams:
        return FusionParams(self.d_min, self.t_tol, self.k_max, self.merge_gap, self.nose_veto,
                            self.a_min)

    def fit(self, X, y):
        feature_sets = self._features(X)
        Xm, ym = training_matrix(feature_sets, y, self.config.L_interval, self.d_min,
                                 self.dominance)
        self.svm_ = LinearSVM(C=self.C, class_weight=self.class_weight,
                              random_state=self.random_state).fit(Xm, ym)
        return self

    @classmethod
    def from_model(cls, model: SvmModel, config: DatasetConfig, **params) -> "LtpMlSpotter":
        est = cls(config, **params)
        est.svm_ = LinearSVM.from_model(model)
        return est

    @property
    def model_(self) -> SvmModel:
        check_is_fitted(self, "svm_")
        return self.svm_.model_

    def decision_function(self, feature_set: LtpFeatureSet) -> np.ndarray:
        """``(R, K)`` SVM scores of one video's ROI rows."""
        check_is_fitted(self, "svm_")
        vectors = feature_set.vectors()
        R, K, D = vectors.shape
        return self.svm_.decision_function(vectors.reshape(R * K, D)).reshape(R, K)

    def spot(self, feature_set: LtpFeatureSet) -> list[SpottedInterval]:
        positive = self.decision_function(feature_set) > 0
        return fuse(positive, feature_set, self.config.L_interval, self.fusion_params)

    def predict(self, X) -> list[SpottedInterval]:
        out = []
        for fs in self._features(X):
            out.extend(self.spot(fs))
        return out


@dataclass
class LosoResult:
    models: dict[str, SvmModel]
    intervals: list[SpottedInterval]
    counts: list[VideoCounts]
    report: EvalReport


def run_loso(feature_sets: Sequence[LtpFeatureSet], ground_truth: Sequence[GroundTruthInterval],
             spotter: LtpMlSpotter, k: float = 0.5) -> LosoResult:
    """Train one model per held-out subject, spot its videos, evaluate the pooled intervals."""
    models, intervals = {}, []
    for fold in loso_splits(list(feature_sets)):
        est = spotter.__class__(**spotter.get_params())
        est.fit(fold.train_samples, ground_truth)
        models[fold.held_out_subject] = est.model_
        intervals.extend(est.predict(fold.test_samples))
    intervals.sort(key=lambda s: (s.video_id, s.onset, s.offset))
    video_ids = sorted(fs.video_id for fs in feature_sets)
    counts, report = evaluate(intervals, ground_truth, k, video_ids=video_ids)
    return LosoResult(models, intervals, counts, report)
