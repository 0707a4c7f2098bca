import numpy as np
import pytest
from sklearn.base import clone

from mespot.dataio import GroundTruthInterval
from mespot.geometry import DEFAULT_LAYOUT
from mespot.ltp import LtpFeatureSet, extract_ltp_features
from mespot.pipeline import LtpMlSpotter, run_loso, training_matrix
from mespot.synth import SynthEvent, generate_sequence

from conftest import small_spec

TARGETS = ["right_brow_inner", "lip_left", "left_brow_mid", "mouth_right", "left_brow_inner",
           "lip_right"]


@pytest.fixture(scope="module")
def tiny_dataset():
    from mespot.dataio import dataset_config

    cfg = dataset_config("CASME2")
    feature_sets, truth, pairs = [], [], []
    for s in range(3):
        events = [SynthEvent("micro", TARGETS[2 * s], 40, 9, 60.0),
                  SynthEvent("micro", TARGETS[2 * s + 1], 120, 9, 60.0),
                  SynthEvent("blink", "eyes", 80, 5, 70.0)]
        spec = small_spec(events, video_id=f"s{s}_v1", subject_id=f"s{s}", duration_s=6.0,
                          noise_sigma=0.5, seed=20 + s, texture_seed=100 + s)
        video, track, gt = generate_sequence(spec)
        feature_sets.append(extract_ltp_features(video, track, cfg))
        pairs.append((video, track))
        truth.extend(gt)
    return cfg, feature_sets, truth, pairs


def fake_set(raw_peaks, frames=(1, 2, 3)):
    """Feature set whose ROI ``r`` reaches raw amplitude ``raw_peaks[r]`` on every row."""
    raw = np.asarray(raw_peaks, dtype=float)
    d = np.zeros((12, len(frames), 8))
    d[:, :, 0] = 1.0
    return LtpFeatureSet("v", "s", DEFAULT_LAYOUT.roles, np.array(frames),
                         np.zeros(len(frames), int), raw, d, len(frames))


def test_training_matrix_keeps_dominant_positive_rows_only():
    fs = fake_set([10.0] + [1.0] * 10 + [6.0])
    truth = [GroundTruthInterval("v", 2, 2, None, "micro")]
    X, y = training_matrix([fs], truth, 9, d_min=0.2, dominance=0.5)
    assert (y == 1).sum() == 2  # ROI 0 and ROI 11 at frame 2
    assert (y == -1).sum() == 24  # every negative row stays
    X, y = training_matrix([fs], truth, 9, d_min=0.2, dominance=None)
    assert (y == 1).sum() == 12
    assert X.shape == (36, 9)


def test_macro_and_blink_rows_are_negative():
    fs = fake_set([5.0] * 12)
    truth = [GroundTruthInterval("v", 1, 3, None, "macro"), GroundTruthInterval("v", 2, 2, None, "blink")]
    _, y = training_matrix([fs], truth, 9)
    assert (y == -1).all()


def test_estimator_params_and_clone(casme2):
    est = LtpMlSpotter(casme2, C=2.0, nose_veto=False)
    twin = clone(est)
    assert twin.get_params()["C"] == 2.0 and twin.get_params()["nose_veto"] is False
    assert est.fusion_params.nose_veto is False and est.fusion_params.a_min == 0.1


def test_fit_predict_on_raw_videos(tiny_dataset):
    cfg, feature_sets, truth, pairs = tiny_dataset
    est = LtpMlSpotter(cfg).fit(pairs[:2], truth)
    from_features = LtpMlSpotter(cfg).fit(feature_sets[:2], truth)
    assert np.array_equal(est.model_.weights, from_features.model_.weights)
    out = est.predict([pairs[2]])
    assert out == from_features.predict([feature_sets[2]])
    assert all(i.video_id == "s2_v1" and i.source == "ltp_ml" for i in out)
    assert est.decision_function(feature_sets[2]).shape == (12, len(feature_sets[2].frames))
    again = LtpMlSpotter.from_model(est.model_, cfg)
    assert again.predict([feature_sets[2]]) == out


def test_loso_run(tiny_dataset):
    cfg, feature_sets, truth, _ = tiny_dataset
    result = run_loso(feature_sets, truth, LtpMlSpotter(cfg))
    assert sorted(result.models) == ["s0", "s1", "s2"]
    assert result.report.M == 6  # micro events only
    assert result.report.V == 3
    assert result.report.A >= 4
    again = run_loso(feature_sets, truth, LtpMlSpotter(cfg))
    assert again.intervals == result.intervals
    assert [i.score for i in again.intervals] == [i.score for i in result.intervals]
    for subj, model in result.models.items():
        assert np.array_equal(model.weights, again.models[subj].weights)
