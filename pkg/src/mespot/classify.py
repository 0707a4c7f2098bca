"""Local classification of LTP features.

Labels come from the micro-expression annotations, a linear SVM separates ME
patterns from everything else, and folds hold out one subject at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataio import DatasetConfig, GroundTruthInterval
from .exceptions import (
    DegenerateTrainingSetError,
    DimensionMismatchError,
    FormatError,
    NeedMultipleSubjectsError,
)

MODEL_MAGIC = "mespot-linear-svm 1"


# --- labels -----------------------------------------------------------------

def positive_ranges(ground_truth: Iterable[GroundTruthInterval], L_interval: int,
                    kinds: Sequence[str] = ("micro",)) -> list[tuple[int, int]]:
    """Start frames whose LTP window lies inside an ME: ``[onset, max(onset, offset-L+1)]``."""
    return [(g.onset, max(g.onset, g.offset - L_interval + 1))
            for g in ground_truth if g.kind in kinds]


def frame_labels(frames: np.ndarray, ground_truth: Iterable[GroundTruthInterval],
                 L_interval: int) -> np.ndarray:
    """``+1``/``-1`` label of each global frame index in ``frames``."""
    frames = np.asarray(frames)
    labels = -np.ones(frames.shape, dtype=np.int8)
    for lo, hi in positive_ranges(ground_truth, L_interval):
        labels[(frames >= lo) & (frames <= hi)] = 1
    return labels


class LabeledSample(NamedTuple):
    feature: np.ndarray
    label: int
    subject_id: str
    video_id: str
    roi_id: int
    global_frame: int


def assign_labels(feature_set, ground_truth: Iterable[GroundTruthInterval],
                  config: DatasetConfig) -> list[LabeledSample]:
    """Label every ROI feature of one video; only micro intervals give positives."""
    gt = [g for g in ground_truth if g.video_id == feature_set.video_id]
    labels = frame_labels(feature_set.frames, gt, config.L_interval)
    vectors = feature_set.vectors()
    return [
        LabeledSample(vectors[r, i], int(labels[i]), feature_set.subject_id,
                      feature_set.video_id, r, int(frame))
        for r in range(feature_set.n_rois)
        for i, frame in enumerate(feature_set.frames)
    ]


# --- LOSO -------------------------------------------------------------------

@dataclass(frozen=True)
class LosoFold:
    held_out_subject: str
    train_samples: list
    test_samples: list


def loso_splits(samples: Sequence) -> list[LosoFold]:
    """One fold per subject (sorted by id); anything with a ``subject_id`` can be split."""
    subjects = sorted({s.subject_id for s in samples})
    if len(subjects) < 2:
        raise NeedMultipleSubjectsError(
            f"leave-one-subject-out needs two or more subjects, got {subjects}"
        )
    return [
        LosoFold(
            subj,
            [s for s in samples if s.subject_id != subj],
            [s for s in samples if s.subject_id == subj],
        )
        for subj in subjects
    ]


# --- linear SVM -------------------------------------------------------------

@numba.njit(cache=True)
def _xorshift(state):
    x = state[0]
    x ^= (x << np.uint64(13))
    x ^= (x >> np.uint64(7))
    x ^= (x << np.uint64(17))
    state[0] = x
    return x


@numba.njit(cache=True)
def _dcd_pass(X, y, cost, qdiag, alpha, w, index, active, pg_max_old, pg_min_old, state):
    """One shuffled sweep over the active set with liblinear-style shrinking.

    Returns the new active-set size and the extreme projected gradients seen.
    """
    for s in range(active - 1, 0, -1):
        j = np.int64(_xorshift(state) % np.uint64(s + 1))
        index[s], index[j] = index[j], index[s]
    pg_max, pg_min = -np.inf, np.inf
    s = 0
    while s < active:
        i = index[s]
        g = 0.0
        for k in range(X.shape[1]):
            g += w[k] * X[i, k]
        g = y[i] * g - 1.0
        pg = 0.0
        if alpha[i] == 0.0:
            if g > pg_max_old:
                active -= 1
                index[s], index[active] = index[active], index[s]
                continue
            if g < 0.0:
                pg = g
        elif alpha[i] == cost[i]:
            if g < pg_min_old:
                active -= 1
                index[s], index[active] = index[active], index[s]
                continue
            if g > 0.0:
                pg = g
        else:
            pg = g
        pg_max = max(pg_max, pg)
        pg_min = min(pg_min, pg)
        if abs(pg) > 1e-12 and qdiag[i] > 0.0:
            a_old = alpha[i]
            a_new = min(max(a_old - g / qdiag[i], 0.0), cost[i])
            step = (a_new - a_old) * y[i]
            for k in range(X.shape[1]):
                w[k] += step * X[i, k]
            alpha[i] = a_new
        s += 1
    return active, pg_max, pg_min


def _primal(X, y, cost, w):
    margins = np.maximum(0.0, 1.0 - y * (X @ w))
    return 0.5 * float(w @ w) + float(cost @ margins)


def _fit_dual_cd(X, y, cost, seed, tol, max_epochs, kkt_tol=1e-3):
    """Hinge-loss SVM through dual coordinate descent; the last column of X is the bias input.

    Stops at a full pass whose projected-gradient spread is below ``kkt_tol``
    or whose primal objective moved by less than ``tol`` relative to the
    previous full pass.
    """
    n, d = X.shape
    qdiag = np.einsum("ij,ij->i", X, X)
    alpha = np.zeros(n)
    w = np.zeros(d)
    index = np.arange(n)
    mixed = (int(seed) * 0x9E3779B97F4A7C15) % (1 << 64) | 1
    state = np.array([mixed], dtype=np.uint64)
    active = n
    pg_max_old, pg_min_old = np.inf, -np.inf
    prev = _primal(X, y, cost, w)
    epochs = since_full = 0
    for epochs in range(1, max_epochs + 1):
        full = active == n
        active, pg_max, pg_min = _dcd_pass(X, y, cost, qdiag, alpha, w, index, active,
                                           pg_max_old, pg_min_old, state)
        since_full = 0 if full else since_full + 1
        if full:
            obj = _primal(X, y, cost, w)
            if pg_max - pg_min <= kkt_tol or abs(prev - obj) <= tol * max(abs(prev), 1e-12):
                break
            prev = obj
        # the shrunk problem can stall far from the optimum of the full one,
        # so every few sweeps all samples are brought back
        if pg_max - pg_min <= kkt_tol or since_full >= 10:
            active = n
            pg_max_old, pg_min_old = np.inf, -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0 else np.inf
        pg_min_old = pg_min if pg_min < 0 else -np.inf
    return w, epochs


def _class_weights(y, class_weight):
    if class_weight is None:
        return 1.0, 1.0
    if class_weight == "balanced":
        n = y.size
        n_pos = int(np.sum(y > 0))
        return n / (2.0 * n_pos), n / (2.0 * (n - n_pos))
    return float(class_weight.get(1, 1.0)), float(class_weight.get(-1, 1.0))


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray
    bias: float
    c_param: float
    class_weights: tuple[float, float]

    @property
    def dims(self) -> int:
        return self.weights.size

    def to_text(self) -> str:
        lines = [
            MODEL_MAGIC,
            f"dims {self.dims}",
            f"C {float(self.c_param).hex()}",
            f"class_weights {float(self.class_weights[0]).hex()} {float(self.class_weights[1]).hex()}",
            f"bias {float(self.bias).hex()}",
            "weights",
        ]
        lines += [float(v).hex() for v in self.weights]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SvmModel":
        lines = text.splitlines()
        try:
            if lines[0].strip() != MODEL_MAGIC or lines[5].strip() != "weights":
                raise ValueError("bad header")
            fields = {ln.split()[0]: ln.split()[1:] for ln in lines[1:5]}
            dims = int(fields["dims"][0])
            weights = np.array([float.fromhex(v) for v in lines[6:6 + dims]])
            if weights.size != dims:
                raise ValueError("weight count does not match dims")
            return cls(
                weights,
                float.fromhex(fields["bias"][0]),
                float.fromhex(fields["C"][0]),
                tuple(float.fromhex(v) for v in fields["class_weights"]),
            )
        except (IndexError, KeyError, ValueError) as exc:
            raise FormatError(f"not a model file: {exc}") from None


def save_model(path, model: SvmModel) -> None:
    from .dataio import atomic_write_text

    atomic_write_text(path, model.to_text())


def load_model(path) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        return SvmModel.from_text(fh.read())


class LinearSVM(ClassifierMixin, BaseEstimator):
    """L2-regularised hinge-loss linear SVM with per-class costs.

    Minimises ``0.5*|w|^2 + C * sum_i c_{y_i} * max(0, 1 - y_i (w.x_i + b))``
    (the bias is learned as the weight of a constant input) by dual coordinate
    descent over a seeded permutation of the samples in every epoch, stopping
    when the primal objective changes by less than ``tol`` relative.  With
    ``standardize`` the features are scaled to unit variance for training and
    the scaling is folded back into ``coef_``/``intercept_``.

    Labels must be ``-1``/``+1``; a score of exactly 0 predicts ``-1``.
    """

    def __init__(self, C=1.0, class_weight="balanced", standardize=True, tol=1e-6,
                 max_epochs=100_000, random_state=0):
        self.C = C
        self.class_weight = class_weight
        self.standardize = standardize
        self.tol = tol
        self.max_epochs = max_epochs
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(np.float64)
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if np.unique(y).size < 2:
            raise DegenerateTrainingSetError("training set holds a single class")
        w_pos, w_neg = _class_weights(y, self.class_weight)
        cost = self.C * np.where(y > 0, w_pos, w_neg)
        if self.standardize:
            mu = X.mean(axis=0)
            sigma = X.std(axis=0)
            sigma[sigma == 0] = 1.0
        else:
            mu = np.zeros(X.shape[1])
            sigma = np.ones(X.shape[1])
        Xs = np.hstack([(X - mu) / sigma, np.ones((X.shape[0], 1))])
        w, self.n_iter_ = _fit_dual_cd(Xs, y, cost, self.random_state, self.tol, self.max_epochs)
        self.coef_ = w[:-1] / sigma
        self.intercept_ = float(w[-1] - np.sum(w[:-1] * mu / sigma))
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        self.class_weight_ = (w_pos, w_neg)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.coef_.size:
            raise DimensionMismatchError(f"expected {self.coef_.size} features, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, 1, -1)

    @property
    def model_(self) -> SvmModel:
        check_is_fitted(self, "coef_")
        return SvmModel(self.coef_.copy(), self.intercept_, float(self.C), self.class_weight_)

    @classmethod
    def from_model(cls, model: SvmModel) -> "LinearSVM":
        est = cls(C=model.c_param)
        est.coef_ = np.asarray(model.weights, dtype=np.float64)
        est.intercept_ = float(model.bias)
        est.classes_ = np.array([-1, 1])
        est.n_features_in_ = est.coef_.size
        est.class_weight_ = tuple(model.class_weights)
        return est


def train_linear_svm(samples: Sequence[LabeledSample], c_param: float = 1.0,
                     class_weights="balanced", seed: int = 0) -> SvmModel:
    X = np.array([s.feature for s in samples])
    y = np.array([s.label for s in samples])
    return LinearSVM(C=c_param, class_weight=class_weights, random_state=seed).fit(X, y).model_


def predict(model: SvmModel, feature) -> tuple[float, int]:
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimensionMismatchError(f"expected {model.dims} features, got {x.size}")
    score = float(x @ model.weights + model.bias)
    return score, 1 if score > 0 else -1
