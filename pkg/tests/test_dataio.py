import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mespot.dataio import (
    GroundTruthInterval,
    LandmarkTrack,
    VideoMeta,
    dataset_config,
    load_config_file,
    load_frame_sequence,
    parse_ground_truth,
    parse_landmark_track,
    read_pgm,
    write_frame_dir,
    write_ground_truth,
    write_landmark_track,
    write_packed_raw,
    write_pgm,
)
from mespot.exceptions import (
    DimensionMismatchError,
    EmptyTrackError,
    EmptyVideoError,
    FormatError,
    FrameIOError,
    InvalidIntervalError,
    UnknownDatasetError,
)

META = VideoMeta("v", "s", 30.0)


def test_pgm_dir_of_three_frames(tmp_path, rng):
    frames = rng.integers(0, 256, size=(3, 64, 64), dtype=np.uint8)
    write_frame_dir(tmp_path, frames)
    video = load_frame_sequence(tmp_path, META)
    assert len(video) == 3
    assert (video.height, video.width) == (64, 64)
    np.testing.assert_array_equal(video.frames, frames)
    np.testing.assert_array_equal(video.frame(2), frames[1])


def test_mixed_frame_sizes_rejected(tmp_path):
    write_pgm(tmp_path / "0001.pgm", np.zeros((64, 64), np.uint8))
    write_pgm(tmp_path / "0002.pgm", np.zeros((32, 32), np.uint8))
    with pytest.raises(DimensionMismatchError):
        load_frame_sequence(tmp_path, META)


def test_empty_directory(tmp_path):
    with pytest.raises(EmptyVideoError):
        load_frame_sequence(tmp_path, META)


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 2\n# depth\n255\n\x01\x02\x03\x04")
    np.testing.assert_array_equal(read_pgm(p), [[1, 2], [3, 4]])


def test_unreadable_pgm(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 2\n255\n1 2 3 4")
    with pytest.raises(FrameIOError):
        read_pgm(p)


def test_packed_raw_roundtrip_and_truncation(tmp_path, rng):
    frames = rng.integers(0, 256, size=(10, 8, 12), dtype=np.uint8)
    path = tmp_path / "video.raw"
    write_packed_raw(path, frames)
    np.testing.assert_array_equal(load_frame_sequence(path, META).frames, frames)
    data = path.read_bytes()
    path.write_bytes(data[: 16 + 7 * 8 * 12])
    with pytest.raises(FrameIOError, match="10 frames"):
        load_frame_sequence(path, META)


def _landmark_csv(path, rows, ncols=169):
    lines = [",".join(str(v) for v in [idx] + list(vals)[: ncols - 1]) for idx, vals in rows]
    path.write_text("\n".join(lines) + "\n")


def test_landmark_track_two_rows(tmp_path):
    _landmark_csv(tmp_path / "lm.csv", [(1, np.arange(168)), (2, np.arange(168) + 1)])
    track = parse_landmark_track(tmp_path / "lm.csv")
    assert len(track) == 2
    assert track.points.shape == (2, 84, 2)
    assert track.at(1)[0].tolist() == [0, 1]


def test_landmark_wrong_column_count(tmp_path):
    (tmp_path / "lm.csv").write_text(",".join(["1"] * 170) + "\n")
    with pytest.raises(FormatError, match="170"):
        parse_landmark_track(tmp_path / "lm.csv")


def test_landmark_empty(tmp_path):
    (tmp_path / "lm.csv").write_text("")
    with pytest.raises(EmptyTrackError):
        parse_landmark_track(tmp_path / "lm.csv")


def test_landmark_gap_interpolated_at_midpoint(tmp_path, rng):
    a, b = rng.uniform(0, 100, 168), rng.uniform(0, 100, 168)
    _landmark_csv(tmp_path / "lm.csv", [(1, a), (3, b)])
    track = parse_landmark_track(tmp_path / "lm.csv")
    np.testing.assert_allclose(track.at(2).ravel(), (a + b) / 2, rtol=0, atol=1e-12)


def test_landmark_range_extension_holds_edges(tmp_path, rng):
    a = rng.uniform(0, 100, 168)
    _landmark_csv(tmp_path / "lm.csv", [(5, a), (6, a + 1)])
    track = parse_landmark_track(tmp_path / "lm.csv", frame_range=(1, 9))
    assert track.frame_indices[0] == 1 and track.frame_indices[-1] == 9
    np.testing.assert_array_equal(track.at(1).ravel(), a)
    np.testing.assert_array_equal(track.at(9).ravel(), a + 1)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), start=st.integers(1, 500), seed=st.integers(0, 2**32 - 1))
def test_landmark_roundtrip(n, start, seed, tmp_path_factory):
    pts = np.random.default_rng(seed).uniform(-50, 500, size=(n, 84, 2))
    track = LandmarkTrack(np.arange(start, start + n), pts)
    path = tmp_path_factory.mktemp("lm") / "t.csv"
    write_landmark_track(path, track)
    back = parse_landmark_track(path)
    np.testing.assert_array_equal(back.frame_indices, track.frame_indices)
    np.testing.assert_array_equal(back.points, track.points)


def test_ground_truth_rows(tmp_path):
    p = tmp_path / "gt.csv"
    p.write_text("v1,micro,100,110,130\nv1,blink,50,,60\n")
    first, second = parse_ground_truth(p)
    assert (first.kind, first.onset, first.apex, first.offset) == ("blink", 50, None, 60)
    assert (second.onset, second.apex, second.offset) == (100, 110, 130)


def test_ground_truth_invalid_row_number(tmp_path):
    p = tmp_path / "gt.csv"
    p.write_text("video_id,kind,onset,apex,offset\nv1,micro,10,,20\nv1,micro,90,85,80\n")
    with pytest.raises(InvalidIntervalError) as err:
        parse_ground_truth(p)
    assert err.value.row == 3


def test_ground_truth_bad_kind(tmp_path):
    p = tmp_path / "gt.csv"
    p.write_text("v1,smirk,1,,2\n")
    with pytest.raises(FormatError):
        parse_ground_truth(p)


gt_rows = st.builds(
    lambda vid, on, length, apex_frac, kind, with_apex: GroundTruthInterval(
        vid, on, on + length, (on + int(apex_frac * length)) if with_apex else None, kind),
    st.sampled_from(["a", "b", "c_1"]), st.integers(1, 10_000), st.integers(0, 300),
    st.floats(0, 1), st.sampled_from(["micro", "macro", "blink", "other"]), st.booleans(),
)


@settings(max_examples=40, deadline=None)
@given(rows=st.lists(gt_rows, max_size=12))
def test_ground_truth_roundtrip(rows, tmp_path_factory):
    rows = sorted(rows, key=lambda g: (g.video_id, g.onset, g.offset))
    path = tmp_path_factory.mktemp("gt") / "gt.csv"
    write_ground_truth(path, rows)
    back = parse_ground_truth(path)
    assert [(g.video_id, g.onset, g.offset) for g in back] == \
        [(g.video_id, g.onset, g.offset) for g in rows]
    assert sorted(back, key=repr) == sorted(rows, key=repr)


@pytest.mark.parametrize("name, expected", [
    ("SAMM", (200, 200, 60, 60, 15, 0.05)),
    ("CASME2", (30, 30, 9, 9, 10, 0.15)),
])
def test_dataset_constants(name, expected):
    c = dataset_config(name)
    assert (c.fps, c.L_window, c.L_overlap, c.L_interval, c.size_roi, c.peak_threshold_tau) == expected


def test_dataset_name_aliases():
    assert dataset_config("cas(me)2") == dataset_config("CASME2")
    assert dataset_config("samm").name == "SAMM"
    with pytest.raises(UnknownDatasetError):
        dataset_config("MMEW")


def test_config_override_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("dataset = samm\ntau = 0.1\nsize_roi = formula\n# comment\n")
    c = load_config_file(p)
    assert c.L_window == 200 and c.peak_threshold_tau == 0.1 and c.size_roi is None
    p.write_text("dataset = casme2\nwindow_len = 3\n")
    with pytest.raises(FormatError, match=":2:"):
        load_config_file(p)


def test_config_invariants():
    c = dataset_config("CASME2")
    for bad in (dict(L_overlap=30), dict(L_interval=1), dict(size_roi=3), dict(fps=0)):
        with pytest.raises(ValueError):
            c.replace(**bad)
