"""Synthetic long videos with landmarks and exact ground truth.

A textured face template with the 84-point layout of :mod:`mespot.geometry`
is translated by a slow head drift; facial movements are rendered as Gaussian
intensity bumps on landmarks whose strength follows a triangular
onset-apex-offset profile.  Micro and macro movements brighten the skin,
blinks darken both eyes.  Two nuisance kinds never appear in the ground
truth: ``head`` is a brief rigid translation of the whole face (landmarks
included) that returns to rest, and ``light`` brightens one side of the
face with a ramp that starts just past the face centre on the dark side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .dataio import (
    FrameSequence,
    GroundTruthInterval,
    LandmarkTrack,
    N_LANDMARKS,
    read_key_values,
    write_frame_dir,
    write_ground_truth,
    write_landmark_track,
)
from .exceptions import FormatError, SpecError

EVENT_KINDS = ("micro", "macro", "blink", "head", "light")
LABELLED_KINDS = ("micro", "macro", "blink")

# unit direction (x, y) of a head movement or a lighting ramp, image coordinates
DIRECTIONS = {
    "left": (-1.0, 0.0), "right": (1.0, 0.0), "up": (0.0, -1.0), "down": (0.0, 1.0),
    "up_left": (-math.sqrt(0.5), -math.sqrt(0.5)), "up_right": (math.sqrt(0.5), -math.sqrt(0.5)),
    "down_left": (-math.sqrt(0.5), math.sqrt(0.5)), "down_right": (math.sqrt(0.5), math.sqrt(0.5)),
}

TARGETS = {
    "right_brow_outer": (0,),
    "right_brow_mid": (4,),
    "right_brow_inner": (9,),
    "left_brow_inner": (10,),
    "left_brow_mid": (15,),
    "left_brow_outer": (19,),
    "mouth_right": (48,),
    "lip_right": (50,),
    "lip_left": (54,),
    "mouth_left": (56,),
    "nose_right": (41,),
    "nose_left": (45,),
    "brows": (0, 4, 9, 10, 15, 19),
    "mouth": (48, 50, 54, 56),
    "nose_wrinkle": (41, 45, 50, 54),
    "smile": (48, 50, 54, 56, 41, 45),
    "frown": (0, 4, 9, 10, 15, 19, 41, 45),
}
MICRO_TARGETS = tuple(k for k, v in TARGETS.items() if len(v) == 1 and not k.startswith("nose"))


def face_template(width: int = 160, height: int = 160, scale: float = 1.0,
                  dx: float = 0.0, dy: float = 0.0) -> np.ndarray:
    """``(84, 2)`` landmark template (1-based pixels) for a frontal face."""
    cx, cy = width / 2 + 0.5 + dx, height / 2 + 0.5 + dy
    pts = np.zeros((N_LANDMARKS, 2))

    def put(i, x, y):
        pts[i] = (cx + scale * x, cy + scale * y)

    for i in range(10):  # eyebrows, outer to inner on the right, inner to outer on the left
        t = i / 9
        arch = 6 * math.sin(math.pi * t)
        put(i, -40 + 31 * t, -25 - arch)
        put(10 + i, 9 + 31 * t, -25 - 6 * math.sin(math.pi * (1 - t)))
    for k in range(8):  # eyes, starting at the outer (right) / inner (left) corner
        a = math.pi * k / 4
        put(20 + k, -21 - 11 * math.cos(a), -10 - 4 * math.sin(a))
        put(28 + k, 21 - 11 * math.cos(a), -10 - 4 * math.sin(a))
    for k in range(4):
        put(36 + k, 0, -8 + 7 * k)
        put(40 + k, -5 - 1.5 * k, 0 + 5 * k)
        put(44 + k, 5 + 1.5 * k, 0 + 5 * k)
    for k in range(16):
        a = math.pi - math.pi * k / 8
        put(48 + k, 20 * math.cos(a), 40 - 7 * math.sin(a))
    for k in range(8):
        a = math.pi - math.pi * k / 4
        put(64 + k, 12 * math.cos(a), 40 - 3 * math.sin(a))
    for k in range(12):
        a = math.pi * (1.0 - k / 11)
        put(72 + k, 45 * math.cos(a), -20 + 70 * math.sin(a))
    return pts


@dataclass(frozen=True)
class SynthEvent:
    kind: str
    target: str
    onset: int
    duration: int
    amplitude: float

    @property
    def offset(self) -> int:
        return self.onset + self.duration - 1

    @property
    def apex(self) -> int:
        return self.onset + (self.duration - 1) // 2


@dataclass(frozen=True)
class SynthSpec:
    video_id: str = "synth"
    subject_id: str = "s1"
    fps: float = 30.0
    duration_s: float = 20.0
    width: int = 160
    height: int = 160
    face_scale: float = 1.0
    texture_amplitude: float = 18.0
    roi_size: int = 10
    events: tuple[SynthEvent, ...] = ()
    noise_sigma: float = 0.0
    drift_px_per_s: float = 0.0
    drift_angle_deg: float = 30.0
    seed: int = 0
    texture_seed: Optional[int] = None

    @property
    def n_frames(self) -> int:
        return int(round(self.fps * self.duration_s))


def event_profile(event: SynthEvent, n_frames: int) -> np.ndarray:
    """Triangular strength per frame (0-based array, frame ``f`` at ``f-1``), > 0 on the event."""
    prof = np.zeros(n_frames)
    rise = event.apex - event.onset + 1
    fall = event.offset - event.apex + 1
    for f in range(event.onset, event.offset + 1):
        if f <= event.apex:
            prof[f - 1] = (f - event.onset + 1) / rise
        else:
            prof[f - 1] = (event.offset - f + 1) / fall
    return prof


def _add_blob(img, x, y, sigma, gain):
    """Add ``gain`` times a Gaussian centred at 1-based pixel ``(x, y)``, cut at 6 sigma."""
    h, w = img.shape
    reach = int(math.ceil(6.0 * sigma))
    x0, x1 = max(1, int(x) - reach), min(w, int(x) + reach + 1)
    y0, y1 = max(1, int(y) - reach), min(h, int(y) + reach + 1)
    if x0 > x1 or y0 > y1:
        return
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    img[y0 - 1:y1, x0 - 1:x1] += gain * np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2.0 * sigma ** 2))


def _base_face(spec: SynthSpec, landmarks: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(spec.seed if spec.texture_seed is None else spec.texture_seed)
    h, w = spec.height, spec.width
    tex = ndimage.gaussian_filter(rng.normal(size=(h, w)), 1.0)
    tex *= spec.texture_amplitude / max(tex.std(), 1e-12)
    img = 120.0 + tex
    for i in range(20):  # eyebrows
        _add_blob(img, *landmarks[i], 2.2, -45.0)
    for i in range(20, 36):  # eyes
        _add_blob(img, *landmarks[i], 2.0, -30.0)
    for i in range(48, 72):  # lips
        _add_blob(img, *landmarks[i], 2.0, -20.0)
    for i in (42, 43, 46, 47):  # nostrils
        _add_blob(img, *landmarks[i], 1.8, -25.0)
    return img


def _event_centers(event: SynthEvent, landmarks: np.ndarray) -> list[np.ndarray]:
    if event.kind == "blink":
        return [landmarks[20:28].mean(axis=0), landmarks[28:36].mean(axis=0)]
    if event.target.startswith("lm:"):
        idx = [int(v) for v in event.target[3:].split(",")]
    elif event.target in TARGETS:
        idx = TARGETS[event.target]
    else:
        raise SpecError(f"unknown event target {event.target!r}")
    return [landmarks[i] for i in idx]


def _validate(spec: SynthSpec):
    if spec.fps <= 0 or spec.n_frames < 1:
        raise SpecError("need positive fps and duration")
    for ev in spec.events:
        if ev.kind not in EVENT_KINDS:
            raise SpecError(f"unknown event kind {ev.kind!r}")
        if ev.amplitude <= 0:
            raise SpecError("event amplitude must be positive")
        if ev.kind in ("head", "light") and ev.target not in DIRECTIONS:
            raise SpecError(f"unknown {ev.kind} direction {ev.target!r}")
        if ev.duration < 1 or ev.onset < 1 or ev.offset > spec.n_frames:
            raise SpecError(
                f"{ev.kind} event [{ev.onset}, {ev.offset}] outside frames 1..{spec.n_frames}"
            )


def drift_offsets(spec: SynthSpec) -> np.ndarray:
    """``(T, 2)`` head translation (x, y) in pixels of every frame.

    Slow linear drift plus the excursions of any ``head`` events, whose
    amplitude is the peak displacement in pixels.
    """
    t = np.arange(spec.n_frames) / spec.fps
    ang = math.radians(spec.drift_angle_deg)
    offsets = np.outer(t * spec.drift_px_per_s, [math.cos(ang), math.sin(ang)])
    for ev in spec.events:
        if ev.kind == "head":
            offsets += np.outer(event_profile(ev, spec.n_frames) * ev.amplitude,
                                DIRECTIONS[ev.target])
    return offsets


def render(spec: SynthSpec, with_events: bool = True, with_noise: bool = True):
    """Float frames ``(T, H, W)`` before quantisation, and the ``(T, 84, 2)`` landmarks."""
    _validate(spec)
    template = face_template(spec.width, spec.height, spec.face_scale)
    h, w = spec.height, spec.width
    base = _base_face(spec, template)
    offsets = drift_offsets(spec)
    landmarks = template[None, :, :] + offsets[:, None, :]
    frames = np.empty((spec.n_frames, h, w))
    for f in range(spec.n_frames):
        dx, dy = offsets[f]
        if dx == 0 and dy == 0:
            frames[f] = base
        else:
            frames[f] = ndimage.shift(base, (dy, dx), order=1, mode="nearest")
    if with_events:
        sigma = spec.roi_size / 3.0
        yy, xx = np.mgrid[1:h + 1, 1:w + 1]
        reach = 45.0 * spec.face_scale
        for ev in spec.events:
            if ev.kind == "head":
                continue
            prof = event_profile(ev, spec.n_frames)
            if ev.kind == "light":
                ux, uy = DIRECTIONS[ev.target]
                for f in np.flatnonzero(prof):
                    cx, cy = landmarks[f].mean(axis=0)
                    proj = (xx - cx) * ux + (yy - cy) * uy
                    ramp = np.clip((proj + 0.2 * reach) / reach, 0.0, 1.0)
                    frames[f] += ev.amplitude * prof[f] * ramp
                continue
            sign = -1.0 if ev.kind == "blink" else 1.0
            ev_sigma = 1.5 * sigma if ev.kind == "blink" else sigma
            for f in np.flatnonzero(prof):
                for c in _event_centers(ev, landmarks[f]):
                    if not (1 <= c[0] <= w and 1 <= c[1] <= h):
                        raise SpecError(f"{ev.kind} event centre {tuple(c)} outside the frame")
                    _add_blob(frames[f], c[0], c[1], ev_sigma, sign * ev.amplitude * prof[f])
    if with_noise and spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, 1])
        frames += rng.normal(scale=spec.noise_sigma, size=frames.shape)
    return frames, landmarks


def generate_sequence(spec: SynthSpec):
    """``(FrameSequence, LandmarkTrack, ground truth)`` of a synthetic video."""
    frames, landmarks = render(spec)
    pixels = np.clip(np.floor(frames + 0.5), 0, 255).astype(np.uint8)
    video = FrameSequence(spec.video_id, spec.subject_id, spec.fps, pixels)
    track = LandmarkTrack(np.arange(1, spec.n_frames + 1), landmarks)
    gt = sorted(
        (GroundTruthInterval(spec.video_id, ev.onset, ev.offset, ev.apex, ev.kind)
         for ev in spec.events if ev.kind in LABELLED_KINDS),
        key=lambda g: (g.onset, g.offset),
    )
    return video, track, gt


# --- spec files -------------------------------------------------------------

_SCALARS = {
    "video_id": str, "subject_id": str, "fps": float, "duration_s": float, "width": int,
    "height": int, "face_scale": float, "texture_amplitude": float, "roi_size": int,
    "noise_sigma": float, "drift_px_per_s": float, "drift_angle_deg": float, "seed": int,
    "texture_seed": int,
}


def load_spec(path) -> SynthSpec:
    """Read a spec file: scalar ``key = value`` lines plus
    ``event.<i> = <kind> <target> <onset> <duration> <amplitude>`` lines."""
    values, events = {}, []
    for lineno, key, value in read_key_values(path):
        try:
            if key.startswith("event."):
                kind, target, onset, duration, amplitude = value.split()
                events.append((int(key[6:]), SynthEvent(kind, target, int(onset), int(duration),
                                                        float(amplitude))))
            elif key in _SCALARS:
                values[key] = _SCALARS[key](value)
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}:{lineno}: cannot parse {key} = {value}") from None
    spec = SynthSpec(**values, events=tuple(ev for _, ev in sorted(events, key=lambda p: p[0])))
    _validate(spec)
    return spec


def dump_spec(spec: SynthSpec) -> str:
    lines = []
    for key in _SCALARS:
        value = getattr(spec, key)
        if value is not None:
            lines.append(f"{key} = {value}")
    for i, ev in enumerate(spec.events):
        lines.append(f"event.{i} = {ev.kind} {ev.target} {ev.onset} {ev.duration} {ev.amplitude!r}")
    return "\n".join(lines) + "\n"


def write_dataset(out_dir, specs: Sequence[SynthSpec], dataset: str = "casme2") -> Path:
    """Render ``specs`` under ``out_dir`` and write a run manifest; returns its path.

    Layout: ``frames/<video>/*.pgm``, ``landmarks/<video>.csv``, ``gt.csv``
    and ``manifest.txt``.
    """
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "landmarks").mkdir(exist_ok=True)
    all_gt = []
    lines = [f"dataset = {dataset}", "ground_truth = gt.csv"]
    for spec in specs:
        video, track, gt = generate_sequence(spec)
        write_frame_dir(out / "frames" / spec.video_id, video.frames)
        write_landmark_track(out / "landmarks" / f"{spec.video_id}.csv", track)
        all_gt.extend(gt)
        lines.append(f"video = {spec.video_id}, {spec.subject_id}, frames/{spec.video_id}, "
                     f"landmarks/{spec.video_id}.csv")
    write_ground_truth(out / "gt.csv", all_gt)
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


# --- benchmark suite --------------------------------------------------------

def _place_events(rng, n_frames, fps, wanted, margin_s=1.0, gap_s=1.5):
    """Onsets for events of the given durations, at least ``gap_s`` apart."""
    lo, gap = int(margin_s * fps), int(gap_s * fps)
    for _ in range(1000):
        onsets = []
        for dur in wanted:
            onsets.append(int(rng.integers(lo, n_frames - lo - dur)))
        order = np.argsort(onsets)
        ok = True
        for a, b in zip(order[:-1], order[1:]):
            if onsets[b] - (onsets[a] + wanted[a]) < gap:
                ok = False
        if ok:
            return onsets
    raise SpecError("cannot place events; video too short")


def synthetic_suite(n_subjects: int = 3, videos_per_subject: int = 4, n_micro: int = 20,
                    n_blink: int = 6, n_macro: int = 4, n_light: int = 6, n_head: int = 0, fps: float = 30.0,
                    duration_s: float = 20.0, noise_sigma: float = 0.5,
                    drift_px_per_s: float = 0.2, seed: int = 0) -> list[SynthSpec]:
    """Specs of a multi-subject benchmark with a fixed number of events of each kind.

    Unlabelled nuisances are mixed in for the spotters to ignore: ``n_light``
    side-lit brightness flickers (peak gain 15 to 25 grey levels on the lit
    cheek) and ``n_head`` head movements (1.5 to 2.5 px excursions).
    """
    rng = np.random.default_rng(seed)
    n_videos = n_subjects * videos_per_subject
    n_frames = int(round(fps * duration_s))

    def spread(count):
        # leftover events go round-robin over subjects so every fold sees each kind
        per = np.full(n_videos, count // n_videos)
        slots = rng.permutation(videos_per_subject)
        order = [s * videos_per_subject + int(k) for k in slots for s in range(n_subjects)]
        per[order[: count % n_videos]] += 1
        return per

    micro, blink, macro = spread(n_micro), spread(n_blink), spread(n_macro)
    light = spread(n_light) if n_light else np.zeros(n_videos, dtype=int)
    head = spread(n_head) if n_head else np.zeros(n_videos, dtype=int)
    macro_targets = ("nose_wrinkle", "smile", "frown", "brows")
    specs = []
    macro_seen = 0
    for v in range(n_videos):
        subj = v // videos_per_subject
        kinds = (["micro"] * micro[v] + ["blink"] * blink[v] + ["macro"] * macro[v]
                 + ["light"] * light[v] + ["head"] * head[v])
        durations = []
        for kind in kinds:
            if kind == "micro":
                durations.append(int(round(fps * rng.uniform(0.25, 0.35))))
            elif kind == "blink":
                durations.append(int(round(fps * rng.uniform(0.12, 0.2))))
            elif kind in ("light", "head"):
                durations.append(int(round(fps * rng.uniform(0.2, 0.4))))
            else:
                durations.append(int(round(fps * rng.uniform(0.6, 1.0))))
        onsets = _place_events(rng, n_frames, fps, durations)
        events = []
        for kind, onset, dur in zip(kinds, onsets, durations):
            if kind == "micro":
                target = MICRO_TARGETS[int(rng.integers(len(MICRO_TARGETS)))]
                amp = float(rng.uniform(50.0, 70.0))
            elif kind == "blink":
                target, amp = "eyes", float(rng.uniform(60.0, 80.0))
            elif kind == "light":
                target = ("left", "right")[int(rng.integers(2))]
                amp = float(rng.uniform(15.0, 25.0))
            elif kind == "head":
                target = sorted(DIRECTIONS)[int(rng.integers(len(DIRECTIONS)))]
                amp = float(rng.uniform(1.5, 2.5))
            else:
                target = macro_targets[macro_seen % len(macro_targets)]
                macro_seen += 1
                amp = float(rng.uniform(60.0, 80.0))
            events.append(SynthEvent(kind, target, onset + 1, dur, round(amp, 3)))
        events.sort(key=lambda e: e.onset)
        specs.append(SynthSpec(
            video_id=f"s{subj + 1:02d}_v{v % videos_per_subject + 1:02d}",
            subject_id=f"s{subj + 1:02d}",
            fps=fps,
            duration_s=duration_s,
            face_scale=float(rng.uniform(0.95, 1.05)),
            events=tuple(events),
            noise_sigma=noise_sigma,
            drift_px_per_s=drift_px_per_s,
            drift_angle_deg=float(rng.uniform(0, 360)),
            seed=int(rng.integers(2**31)),
            texture_seed=1000 + subj,
        ))
    return specs
