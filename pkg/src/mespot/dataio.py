"""Readers and writers for frames, landmark tracks, annotations and configs.

Frame indices are 1-based everywhere, matching the annotation files shipped
with the long-video databases.  Pixel coordinates of landmarks are also
1-based: pixel (1, 1) is the top-left pixel of a frame.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    EmptyTrackError,
    EmptyVideoError,
    FormatError,
    FrameIOError,
    InvalidIntervalError,
    UnknownDatasetError,
)

N_LANDMARKS = 84
GT_KINDS = ("micro", "macro", "blink", "other")

RAW_MAGIC = 0x5657454D  # b"MEWV" little-endian
RAW_HEADER = struct.Struct("<4I")


def _readonly(array):
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FrameSequence:
    """All frames of one video as a read-only ``(T, H, W)`` uint8 array."""

    video_id: str
    subject_id: str
    fps: float
    frames: np.ndarray
    first_index: int = 1

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise EmptyVideoError(f"video {self.video_id!r} has no frames")
        if frames.dtype != np.uint8:
            if frames.min() < 0 or frames.max() > 255:
                raise ValueError("frames must hold 8-bit grayscale values")
            frames = frames.astype(np.uint8)
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", _readonly(frames))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def last_index(self) -> int:
        return self.first_index + len(self) - 1

    def frame(self, index: int) -> np.ndarray:
        """Frame by its 1-based video index."""
        return self.frames[index - self.first_index]

    def span(self, start: int, end: int) -> np.ndarray:
        """Frames ``start..end`` inclusive (1-based video indices)."""
        return self.frames[start - self.first_index:end - self.first_index + 1]


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    subject_id: str = ""
    fps: float = 30.0
    first_index: int = 1


@dataclass(frozen=True)
class LandmarkTrack:
    """84 tracked points per frame, aligned to consecutive frame indices."""

    frame_indices: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.frame_indices, dtype=np.int64)
        pts = np.asarray(self.points, dtype=np.float64)
        if idx.size == 0:
            raise EmptyTrackError("landmark track has no frames")
        if pts.shape != (idx.size, N_LANDMARKS, 2):
            raise FormatError(
                f"expected points of shape ({idx.size}, {N_LANDMARKS}, 2), got {pts.shape}"
            )
        if np.any(np.diff(idx) != 1):
            raise FormatError("landmark frame indices must be consecutive")
        object.__setattr__(self, "frame_indices", _readonly(idx))
        object.__setattr__(self, "points", _readonly(pts))

    def __len__(self):
        return self.frame_indices.size

    def at(self, frame: int) -> np.ndarray:
        """``(84, 2)`` points of a frame; frames beyond the track hold the edge value."""
        pos = int(np.clip(frame - self.frame_indices[0], 0, len(self) - 1))
        return self.points[pos]


@dataclass(frozen=True, order=True)
class GroundTruthInterval:
    video_id: str
    onset: int
    offset: int
    apex: Optional[int] = None
    kind: str = "micro"

    def __post_init__(self):
        if self.kind not in GT_KINDS:
            raise FormatError(f"unknown interval kind {self.kind!r}")
        if self.onset > self.offset:
            raise InvalidIntervalError(
                f"onset {self.onset} after offset {self.offset}"
            )
        if self.apex is not None and not self.onset <= self.apex <= self.offset:
            raise InvalidIntervalError(
                f"apex {self.apex} outside [{self.onset}, {self.offset}]"
            )

    @property
    def length(self) -> int:
        return self.offset - self.onset + 1


@dataclass(frozen=True)
class DatasetConfig:
    """Per-database window lengths (in frames), ROI size and peak threshold.

    ``size_roi`` of ``None`` selects the ``a = L / 5`` rule from the
    inner-eye distance instead of a fixed ROI side.
    """

    name: str
    fps: float
    L_window: int
    L_overlap: int
    L_interval: int
    size_roi: Optional[int]
    peak_threshold_tau: float

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if not 0 < self.L_overlap < self.L_window:
            raise ValueError("need 0 < L_overlap < L_window")
        if self.L_interval < 2:
            raise ValueError("L_interval must be at least 2")
        if self.size_roi is not None and self.size_roi < 4:
            raise ValueError("size_roi must be at least 4")
        if not 0 <= self.peak_threshold_tau <= 1:
            raise ValueError("peak_threshold_tau must lie in [0, 1]")

    @property
    def stride(self) -> int:
        return self.L_window - self.L_overlap

    def replace(self, **changes) -> "DatasetConfig":
        return dataclasses.replace(self, **changes)


_CONFIGS = {
    "SAMM": DatasetConfig("SAMM", fps=200, L_window=200, L_overlap=60,
                          L_interval=60, size_roi=15, peak_threshold_tau=0.05),
    "CASME2": DatasetConfig("CASME2", fps=30, L_window=30, L_overlap=9,
                            L_interval=9, size_roi=10, peak_threshold_tau=0.15),
}


def dataset_config(name: str) -> DatasetConfig:
    """Parameter set of a database, by name (case-insensitive, ``CAS(ME)2`` accepted)."""
    key = name.upper().replace("(", "").replace(")", "").replace("^", "")
    key = {"CASME": "CASME2"}.get(key, key)
    try:
        return _CONFIGS[key]
    except KeyError:
        raise UnknownDatasetError(
            f"unknown dataset {name!r}; choose from {sorted(_CONFIGS)}"
        ) from None


def read_key_values(path) -> list[tuple[int, str, str]]:
    """``(line number, key, value)`` triples of a ``key = value`` text file.

    Blank lines and ``#`` comments are skipped.
    """
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            entries.append((lineno, key, value))
    return entries


_INT_FIELDS = ("L_window", "L_overlap", "L_interval")


def load_config_file(path, base: Optional[DatasetConfig] = None) -> DatasetConfig:
    """Read a key=value override file.

    A ``dataset = samm|casme2`` line picks the base configuration; other keys
    are :class:`DatasetConfig` field names (``tau`` is accepted for
    ``peak_threshold_tau``, and ``size_roi = formula`` selects the L/5 rule).
    """
    changes = {}
    for lineno, key, value in read_key_values(path):
        if key == "dataset":
            base = dataset_config(value)
            continue
        key = {"tau": "peak_threshold_tau"}.get(key, key)
        try:
            if key in _INT_FIELDS:
                changes[key] = int(value)
            elif key == "size_roi":
                changes[key] = None if value.lower() in ("formula", "none", "") else int(value)
            elif key in ("fps", "peak_threshold_tau"):
                changes[key] = float(value)
            elif key == "name":
                changes[key] = value
            else:
                raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    if base is None:
        raise FormatError(f"{path}: no 'dataset' line and no base configuration given")
    return base.replace(**changes)


# --- frames -----------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int):
    """First ``count`` header tokens of a PGM file and the offset after them."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM image."""
    try:
        data = Path(path).read_bytes()
        (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
        if magic != b"P5":
            raise ValueError(f"not a P5 PGM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        if maxval > 255:
            raise ValueError("only 8-bit PGM is supported")
        pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=offset)
    except (OSError, ValueError) as exc:
        raise FrameIOError(f"cannot read {path}: {exc}") from exc
    return pixels.reshape(h, w)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(image).tobytes())


def read_packed_raw(path) -> np.ndarray:
    """Read a packed raw video: 16-byte header then ``count*h*w`` bytes."""
    try:
        with open(path, "rb") as fh:
            header = fh.read(RAW_HEADER.size)
            if len(header) < RAW_HEADER.size:
                raise ValueError("truncated header")
            magic, w, h, count = RAW_HEADER.unpack(header)
            if magic != RAW_MAGIC:
                raise ValueError(f"bad magic 0x{magic:08x}")
            body = fh.read()
    except (OSError, ValueError) as exc:
        raise FrameIOError(f"cannot read {path}: {exc}") from exc
    expected = w * h * count
    if len(body) < expected:
        got = len(body) // (w * h) if w * h else 0
        raise FrameIOError(f"{path}: header says {count} frames, file holds {got}")
    return np.frombuffer(body, dtype=np.uint8, count=expected).reshape(count, h, w)


def write_packed_raw(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames, dtype=np.uint8)
    count, h, w = frames.shape
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, w, h, count))
        fh.write(np.ascontiguousarray(frames).tobytes())


def load_frame_sequence(path, meta: VideoMeta) -> FrameSequence:
    """Load a video from a directory of PGM frames or a packed raw file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() == ".pgm")
        if not files:
            raise EmptyVideoError(f"no PGM frames in {path}")
        images = [read_pgm(p) for p in files]
        shape = images[0].shape
        for p, img in zip(files, images):
            if img.shape != shape:
                raise DimensionMismatchError(
                    f"{p.name} is {img.shape[1]}x{img.shape[0]}, "
                    f"expected {shape[1]}x{shape[0]}"
                )
        frames = np.stack(images)
    elif path.is_file():
        frames = read_packed_raw(path)
        if frames.shape[0] == 0:
            raise EmptyVideoError(f"{path} holds no frames")
    else:
        raise FrameIOError(f"{path} does not exist")
    return FrameSequence(meta.video_id, meta.subject_id, meta.fps, frames, meta.first_index)


def write_frame_dir(directory, frames: np.ndarray, first_index: int = 1) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(first_index + len(frames))))
    for i, frame in enumerate(frames):
        write_pgm(directory / f"{first_index + i:0{width}d}.pgm", frame)


# --- landmarks --------------------------------------------------------------

def _is_header(row: Sequence[str]) -> bool:
    try:
        float(row[0])
    except (ValueError, IndexError):
        return True
    return False


def parse_landmark_track(path, frame_range: Optional[tuple[int, int]] = None) -> LandmarkTrack:
    """Parse ``frame_idx, x1, y1, ..., x84, y84`` rows.

    Frames missing between two rows are filled by linear interpolation.  With
    ``frame_range`` the track is extended to cover it, holding the first and
    last rows constant outside the annotated range.
    """
    ncols = 1 + 2 * N_LANDMARKS
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or (lineno == 1 and _is_header(row)):
                continue
            if len(row) != ncols:
                raise FormatError(f"{path}:{lineno}: expected {ncols} columns, got {len(row)}")
            try:
                rows[int(row[0])] = [float(v) for v in row[1:]]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise EmptyTrackError(f"{path} holds no landmark rows")
    known = np.array(sorted(rows))
    values = np.array([rows[i] for i in known])
    lo, hi = int(known[0]), int(known[-1])
    if frame_range is not None:
        lo, hi = min(lo, frame_range[0]), max(hi, frame_range[1])
    wanted = np.arange(lo, hi + 1)
    filled = np.empty((wanted.size, values.shape[1]))
    for col in range(values.shape[1]):
        filled[:, col] = np.interp(wanted, known, values[:, col])
    return LandmarkTrack(wanted, filled.reshape(wanted.size, N_LANDMARKS, 2))


def write_landmark_track(path, track: LandmarkTrack) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"{c}{i}" for i in range(1, N_LANDMARKS + 1) for c in "xy"])
        for idx, pts in zip(track.frame_indices, track.points):
            writer.writerow([int(idx)] + [repr(float(v)) for v in pts.ravel()])


# --- ground truth -----------------------------------------------------------

def parse_ground_truth(path) -> list[GroundTruthInterval]:
    """Parse ``video_id, kind, onset, apex, offset`` rows (apex may be empty)."""
    intervals = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not any(cell.strip() for cell in row):
                continue
            if lineno == 1 and row[0].strip() == "video_id":
                continue
            if len(row) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            video_id, kind, onset, apex, offset = (cell.strip() for cell in row)
            try:
                onset, offset = int(onset), int(offset)
                apex = int(apex) if apex else None
            except ValueError:
                raise FormatError(f"{path}:{lineno}: frame indices must be integers") from None
            try:
                intervals.append(GroundTruthInterval(video_id, onset, offset, apex, kind))
            except InvalidIntervalError as exc:
                raise InvalidIntervalError(f"{path}:{lineno}: {exc}", row=lineno) from None
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return sorted(intervals, key=lambda g: (g.video_id, g.onset, g.offset))


def write_ground_truth(path, intervals: Iterable[GroundTruthInterval]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "kind", "onset", "apex", "offset"])
        for g in intervals:
            writer.writerow([g.video_id, g.kind, g.onset, "" if g.apex is None else g.apex, g.offset])


def group_by_video(intervals: Iterable[GroundTruthInterval]) -> dict[str, list[GroundTruthInterval]]:
    grouped: dict[str, list[GroundTruthInterval]] = {}
    for g in intervals:
        grouped.setdefault(g.video_id, []).append(g)
    return grouped


def atomic_write_text(path, text: str) -> None:
    """Write through a temporary file and rename, so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
