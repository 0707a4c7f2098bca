import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mespot.dataio import dataset_config
from mespot.exceptions import BlockTooSmallError, DimensionMismatchError, VideoTooShortError
from mespot.lbpchi2 import (
    Block,
    DifferenceCurve,
    LbpChi2Spotter,
    block_grid,
    chi2_distance,
    difference_curve,
    face_box,
    frame_features,
    lbp_codes,
    lbp_histogram,
    n_bins,
    spot_peaks,
    uniform_mapping,
    write_curve_csv,
)
from mespot.windowing import WindowSpan, segment_video

from oracles import oracle_bin, oracle_histogram


# --- LBP ------------------------------------------------------------------

def test_uniform_pattern_table():
    table = uniform_mapping(8)
    assert n_bins(8) == 59
    assert len(set(table.tolist())) == 59
    assert (table == 58).sum() == 256 - 58
    for code in (0, 1, 3, 0b11110000, 0b10000001, 255):
        assert table[code] == oracle_bin(code)


def test_constant_block_fills_one_bin():
    hist = lbp_histogram(np.full((10, 10), 93, np.uint8))
    assert hist.shape == (59,)
    assert hist.max() == 1.0 and hist.sum() == 1.0
    assert hist[uniform_mapping()[255]] == 1.0


def test_histogram_is_normalised(rng):
    hist = lbp_histogram(rng.integers(0, 256, (20, 17)))
    assert hist.shape == (59,) and hist.sum() == pytest.approx(1.0, abs=1e-12)
    assert lbp_codes(np.zeros((7, 9))).shape == (1, 3)


def test_block_smaller_than_the_circle():
    with pytest.raises(BlockTooSmallError):
        lbp_codes(np.zeros((6, 20)))


def test_matches_plain_oracle(rng):
    for _ in range(5):
        block = rng.integers(0, 256, (16, 16))
        np.testing.assert_array_equal(lbp_histogram(block), oracle_histogram(block))


def test_grey_level_shift_invariance(rng):
    block = rng.integers(0, 200, (16, 16))
    np.testing.assert_array_equal(lbp_histogram(block), lbp_histogram(block + 40))


# --- chi2 -----------------------------------------------------------------

def test_chi2_hand_values():
    assert chi2_distance([1, 0], [0, 1]) == 2.0
    assert chi2_distance([0.5, 0.5, 0], [0.5, 0.5, 0]) == 0.0
    assert chi2_distance([0, 0], [0, 0]) == 0.0
    assert chi2_distance([0.25, 0.75], [0.75, 0.25]) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatchError):
        chi2_distance([1, 0], [1, 0, 0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 400), st.integers(0, 400)), min_size=1, max_size=59))
def test_chi2_properties(pairs):
    a, b = (np.array(x, dtype=float) / 400 for x in zip(*pairs))
    d = chi2_distance(a, b)
    assert d >= 0 and d == chi2_distance(b, a)
    assert (d == 0) == bool(np.all(a == b))


# --- face box and grid ----------------------------------------------------

def test_face_box_grows_ten_percent_per_side():
    lm = np.array([[11.0, 21.0], [111.0, 221.0]])  # 1-based; 0-based span 10..110, 20..220
    box = face_box(lm, (480, 640))
    assert box == Block(0, 241, 0, 121)
    box = face_box(lm + 100, (480, 640))
    assert box == Block(100, 341, 100, 221)
    assert face_box(lm + 500, (480, 640)).y1 == 480


def test_grid_has_36_overlapping_blocks_covering_the_face():
    grid = block_grid(Block(10, 130, 20, 120))
    assert len(grid.blocks) == 36
    ys = sorted({(b.y0, b.y1) for b in grid.blocks})
    xs = sorted({(b.x0, b.x1) for b in grid.blocks})
    assert ys[0][0] == 10 and ys[-1][1] == 130 and xs[0][0] == 20 and xs[-1][1] == 120
    assert all(a[1] > b[0] for a, b in zip(ys, ys[1:]))  # consecutive rows overlap
    with pytest.raises(BlockTooSmallError):
        block_grid(Block(0, 20, 0, 20))


def test_frame_features_equal_per_block_histograms(rng):
    frame = rng.integers(0, 256, (100, 90)).astype(np.uint8)
    grid = block_grid(Block(5, 95, 3, 88))
    feats = frame_features(frame, grid).reshape(36, 59)
    for i in (0, 7, 20, 35):
        b = grid.blocks[i]
        np.testing.assert_array_equal(feats[i], lbp_histogram(frame[b.y0:b.y1, b.x0:b.x1]))


# --- difference curve -----------------------------------------------------

def naive_curve(F, L):
    T = len(F)
    D = np.zeros(T)
    for i in range(L, T - L):
        D[i] = chi2_distance(F[i], (F[i - L] + F[i + L]) / 2)
    C = np.zeros(T)
    for i in range(L, T - L):
        nb = [D[j] for j in (i - L, i + L) if L <= j < T - L]
        C[i] = max(0.0, D[i] - (sum(nb) / len(nb) if nb else 0.0))
    return D, C


def test_curve_matches_naive_loop(rng):
    F = rng.dirichlet(np.ones(12), size=60)
    curve = difference_curve(F, 9)
    D, C = naive_curve(F, 9)
    np.testing.assert_allclose(curve.D, D, rtol=0, atol=1e-12)
    np.testing.assert_allclose(curve.C, C, rtol=0, atol=1e-12)
    assert curve.valid == (10, 51)


def test_static_features_give_zero_curve():
    curve = difference_curve(np.tile([0.2, 0.8], (40, 1)), 9)
    assert not curve.C.any() and not curve.D.any()


def test_impulse_is_the_argmax():
    F = np.tile([0.5, 0.5, 0.0], (50, 1))
    F[23] = [0.0, 0.2, 0.8]
    curve = difference_curve(F, 9)
    assert int(np.argmax(curve.C)) == 23


def test_curve_is_zero_outside_the_defined_range(rng):
    curve = difference_curve(rng.dirichlet(np.ones(5), size=40), 9)
    assert not curve.D[:9].any() and not curve.D[31:].any()
    assert not curve.C[:9].any() and not curve.C[31:].any()


def test_curve_needs_more_than_two_intervals():
    with pytest.raises(VideoTooShortError):
        difference_curve(np.ones((18, 3)) / 3, 9)


# --- peak selection -------------------------------------------------------

def curve_of(values, L=9):
    C = np.asarray(values, dtype=float)
    return DifferenceCurve(np.zeros_like(C), C, L)


def test_zero_curve_gives_nothing():
    spans = segment_video(100, dataset_config("CASME2"))
    assert spot_peaks(curve_of(np.zeros(100)), spans, 0.15) == []


def test_one_clear_peak():
    C = np.zeros(100)
    C[40] = 5.0
    (iv,) = spot_peaks(curve_of(C), [WindowSpan(22, 51, 1)], 0.15, video_id="v")
    assert (iv.video_id, iv.onset, iv.offset, iv.score) == ("v", 32, 50, 5.0)


def test_two_peaks_far_apart_and_close_together():
    spans = [WindowSpan(1, 30, 0), WindowSpan(31, 60, 1)]
    C = np.zeros(60)
    C[[10, 50]] = 1.0  # frames 11 and 51
    assert [(i.onset, i.offset) for i in spot_peaks(curve_of(C), spans, 0.15)] == \
        [(2, 20), (42, 60)]
    C = np.zeros(60)
    C[[26, 33]] = 1.0
    assert [(i.onset, i.offset) for i in spot_peaks(curve_of(C), spans, 0.15)] == [(18, 36)]


def test_overlapping_spans_report_a_shared_peak_once():
    C = np.zeros(75)
    C[47] = 2.0
    spans = segment_video(75, dataset_config("CASME2"))
    assert len(spot_peaks(curve_of(C), spans, 0.15)) == 1


def test_weak_movement_survives_a_strong_one_elsewhere():
    C = np.zeros(90)
    C[10], C[70] = 50.0, 0.5
    spans = [WindowSpan(1, 30, 0), WindowSpan(61, 90, 1)]
    assert len(spot_peaks(curve_of(C), spans, 0.15)) == 2


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), t1=st.floats(0, 1), t2=st.floats(0, 1))
def test_intervals_disjoint_in_range_and_monotone_in_tau(seed, t1, t2):
    r = np.random.default_rng(seed)
    T = int(r.integers(40, 300))
    C = np.where(r.random(T) < 0.1, r.exponential(size=T), 0.0)
    spans = segment_video(T, dataset_config("CASME2"))
    lo, hi = sorted((t1, t2))
    a = spot_peaks(curve_of(C), spans, lo)
    b = spot_peaks(curve_of(C), spans, hi)
    assert len(b) <= len(a)
    for out in (a, b):
        assert all(1 <= i.onset <= i.offset <= T for i in out)
        assert all(x.offset < y.onset for x, y in zip(out, out[1:]))


# --- end to end -----------------------------------------------------------

def test_spotter_finds_a_single_event(casme2, brow_event_video, tmp_path):
    video, track, gt = brow_event_video
    spotter = LbpChi2Spotter(casme2).fit()
    out = spotter.predict([(video, track)])
    assert any(i.onset <= gt[0].apex <= i.offset for i in out)
    best = max(out, key=lambda i: i.score)
    assert best.onset <= gt[0].apex <= best.offset
    write_curve_csv(tmp_path / "c.csv", [("v1", spotter.curve(video, track))])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "video_id,frame,D,C"


def test_spotter_rejects_bad_tau(casme2):
    with pytest.raises(ValueError):
        LbpChi2Spotter(casme2, tau=1.5).fit()
    assert LbpChi2Spotter(casme2).get_params()["tau"] is None
