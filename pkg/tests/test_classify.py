import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from mespot.classify import (
    LinearSVM,
    SvmModel,
    assign_labels,
    frame_labels,
    load_model,
    loso_splits,
    predict,
    save_model,
    train_linear_svm,
)
from mespot.dataio import GroundTruthInterval
from mespot.exceptions import (
    DegenerateTrainingSetError,
    DimensionMismatchError,
    FormatError,
    NeedMultipleSubjectsError,
)
from mespot.ltp import extract_ltp_features


def gt(on, off, kind="micro", vid="v1"):
    return GroundTruthInterval(vid, on, off, None, kind)


def positives(frames, intervals, L=9):
    return np.asarray(frames)[frame_labels(frames, intervals, L) == 1].tolist()


def test_long_event_labels_window_starts_inside_it():
    assert positives(np.arange(1, 300), [gt(100, 130)]) == list(range(100, 123))


def test_short_event_labels_only_its_onset():
    assert positives(np.arange(1, 300), [gt(100, 104)]) == [100]


def test_no_ground_truth_and_other_kinds_are_negative():
    frames = np.arange(1, 300)
    assert positives(frames, []) == []
    assert positives(frames, [gt(100, 130, "macro"), gt(200, 210, "blink")]) == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 900), st.integers(0, 60)), max_size=6))
def test_positive_count_formula(spans):
    # disjoint intervals so the count is additive
    intervals, cursor = [], 1
    for gap, length in spans:
        on = cursor + gap % 50
        intervals.append(gt(on, on + length))
        cursor = on + length + 1
    frames = np.arange(1, cursor + 10)
    expected = sum(max(1, g.offset - g.onset - 9 + 2) for g in intervals)
    assert len(positives(frames, intervals)) == expected


def test_assign_labels_on_features(casme2, brow_event_video):
    video, track, truth = brow_event_video
    fs = extract_ltp_features(video, track, casme2)
    samples = assign_labels(fs, truth + [gt(5, 20, vid="other")], casme2)
    assert len(samples) == 12 * len(fs.frames)
    pos = {s.global_frame for s in samples if s.label == 1}
    assert pos == {50}  # a 9-frame event leaves a single window start
    assert samples[0].feature.shape == (9,)
    assert {s.subject_id for s in samples} == {"s1"}


class Item:
    def __init__(self, subject_id, k):
        self.subject_id, self.k = subject_id, k


def test_loso_folds_partition_by_subject():
    items = [Item(s, k) for k, s in enumerate(["s2", "s1", "s3", "s1", "s2", "s3", "s3"])]
    folds = loso_splits(items)
    assert [f.held_out_subject for f in folds] == ["s1", "s2", "s3"]
    for f in folds:
        assert all(i.subject_id != f.held_out_subject for i in f.train_samples)
        assert all(i.subject_id == f.held_out_subject for i in f.test_samples)
        assert len(f.train_samples) + len(f.test_samples) == len(items)
    tested = sorted(i.k for f in folds for i in f.test_samples)
    assert tested == list(range(len(items)))


def test_loso_needs_two_subjects():
    with pytest.raises(NeedMultipleSubjectsError):
        loso_splits([Item("s1", 0), Item("s1", 1)])


def toy(rng, n=200):
    X = rng.normal(size=(n, 2))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1, -1)
    X += 0.5 * y[:, None] * np.array([1.0, 0.5])  # open a margin
    return X, y


def test_separable_toy_is_learned_exactly(rng):
    X, y = toy(rng)
    clf = LinearSVM(C=10.0).fit(X, y)
    assert (clf.predict(X) == y).all()
    assert clf.score(X, y) == 1.0


def test_symmetric_data_has_no_bias(rng):
    X = rng.normal(size=(100, 3)) + [2.0, 0.0, 0.0]
    Xs = np.vstack([X, -X])
    y = np.r_[np.ones(100), -np.ones(100)]
    assert abs(LinearSVM().fit(Xs, y).intercept_) < 1e-3


def test_same_seed_same_weights(rng):
    X, y = toy(rng)
    X += rng.normal(scale=1.0, size=X.shape)  # not separable any more
    a = LinearSVM(random_state=3).fit(X, y)
    b = LinearSVM(random_state=3).fit(X, y)
    assert np.array_equal(a.coef_, b.coef_) and a.intercept_ == b.intercept_
    c = LinearSVM(random_state=4).fit(X, y)
    np.testing.assert_allclose(c.coef_, a.coef_, rtol=1e-3, atol=1e-3)


def test_solution_matches_a_reference_solver(rng):
    from sklearn.svm import LinearSVC

    X, y = toy(rng, 300)
    X += rng.normal(scale=0.8, size=X.shape)
    ours = LinearSVM(C=1.0, class_weight=None, standardize=False, tol=1e-10).fit(X, y)
    ref = LinearSVC(C=1.0, loss="hinge", dual=True, intercept_scaling=1.0, tol=1e-10,
                    max_iter=1_000_000).fit(X, y)
    np.testing.assert_allclose(ours.coef_, ref.coef_.ravel(), rtol=1e-3, atol=1e-3)
    assert ours.intercept_ == pytest.approx(ref.intercept_[0], abs=1e-3)


def test_minority_class_is_recalled_when_balanced(rng):
    neg = rng.normal(size=(990, 2)) + [-3.0, 0.0]
    pos = rng.normal(scale=0.3, size=(10, 2)) + [1.0, 0.0]
    X = np.vstack([neg, pos])
    y = np.r_[-np.ones(990), np.ones(10)]
    clf = LinearSVM().fit(X, y)
    assert (clf.predict(pos) == 1).all()
    assert clf.class_weight_ == pytest.approx((50.0, 1000 / 1980))


def test_training_errors(rng):
    X = rng.normal(size=(10, 2))
    with pytest.raises(DegenerateTrainingSetError):
        LinearSVM().fit(X, -np.ones(10))
    with pytest.raises(ValueError):
        LinearSVM().fit(X, np.r_[np.zeros(5), np.ones(5)])


def test_predict_rule():
    model = SvmModel(np.array([1.0, 0.0]), 0.0, 1.0, (1.0, 1.0))
    assert predict(model, [2.0, 5.0]) == (2.0, 1)
    assert predict(model, [0.0, 5.0]) == (0.0, -1)
    neg = SvmModel(-model.weights, -model.bias, 1.0, (1.0, 1.0))
    assert predict(neg, [2.0, 5.0])[0] == -2.0
    with pytest.raises(DimensionMismatchError):
        predict(model, [1.0, 2.0, 3.0])


def test_model_file_roundtrip(rng, tmp_path):
    X, y = toy(rng)
    clf = LinearSVM().fit(X, y)
    save_model(tmp_path / "m.model", clf.model_)
    back = LinearSVM.from_model(load_model(tmp_path / "m.model"))
    assert np.array_equal(back.coef_, clf.coef_) and back.intercept_ == clf.intercept_
    np.testing.assert_array_equal(back.decision_function(X), clf.decision_function(X))
    (tmp_path / "bad.model").write_text("hello\n")
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad.model")
    with pytest.raises(DimensionMismatchError):
        back.decision_function(np.ones((2, 3)))


def test_estimator_plumbing(rng):
    clf = LinearSVM(C=0.5, random_state=7)
    assert clf.get_params()["C"] == 0.5
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()
    X, y = toy(rng, 50)
    samples = [type("S", (), {"feature": x, "label": int(t)}) for x, t in zip(X, y)]
    model = train_linear_svm(samples, c_param=0.5, seed=7)
    np.testing.assert_array_equal(model.weights, clf.fit(X, y).coef_)
