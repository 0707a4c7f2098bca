"""Command-line entry point.

``mespot spot``, ``train``, ``loso``, ``evaluate`` and ``synth`` read plain
files and write CSV/JSON/PGM outputs atomically.  Exit codes: 0 on success,
1 for bad inputs (unreadable manifest, unknown video, too few subjects, ...),
2 for command-line usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .classify import load_model, save_model
from .dataio import (
    DatasetConfig,
    VideoMeta,
    atomic_write_text,
    dataset_config,
    load_config_file,
    load_frame_sequence,
    parse_ground_truth,
    parse_landmark_track,
    read_key_values,
)
from .exceptions import FormatError, MespotError
from .fusion import intervals_to_csv, read_intervals_csv
from .lbpchi2 import LbpChi2Spotter
from .ltp import extract_ltp_features
from .metrics import evaluate, report_to_csv, report_to_json
from .pipeline import LtpMlSpotter, run_loso
from .synth import load_spec, synthetic_suite, write_dataset

log = logging.getLogger("mespot")


class UsageError(Exception):
    """Command-line misuse that argparse cannot detect on its own."""


# --- run manifests ----------------------------------------------------------

@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    subject_id: str
    frames: Path
    landmarks: Path


@dataclass
class RunManifest:
    """Parsed manifest.  Relative paths are resolved against the manifest's directory.

    Keys: ``dataset = <name>`` or ``config = <path>``, ``ground_truth =
    <path>``, ``output = <dir>`` and one ``video = <id>, <subject>, <frames>,
    <landmarks>`` line per video.
    """

    path: Path
    dataset: Optional[str] = None
    config_path: Optional[Path] = None
    ground_truth: Optional[Path] = None
    output: Optional[Path] = None
    videos: list[VideoEntry] = field(default_factory=list)


def read_manifest(path) -> RunManifest:
    path = Path(path)
    base = path.parent
    man = RunManifest(path)
    errors = []
    seen = set()
    for lineno, key, value in read_key_values(path):
        where = f"{path}:{lineno}"
        if key == "dataset":
            man.dataset = value
        elif key == "config":
            man.config_path = base / value
        elif key == "ground_truth":
            man.ground_truth = base / value
        elif key == "output":
            man.output = base / value
        elif key == "video":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 4 or not all(parts):
                errors.append(f"{where}: expected 'video = id, subject, frames, landmarks'")
                continue
            vid, subj, frames, landmarks = parts
            if vid in seen:
                errors.append(f"{where}: duplicate video id {vid!r}")
                continue
            seen.add(vid)
            entry = VideoEntry(vid, subj, base / frames, base / landmarks)
            for p in (entry.frames, entry.landmarks):
                if not p.exists():
                    errors.append(f"{where}: {p} does not exist")
            man.videos.append(entry)
        else:
            errors.append(f"{where}: unknown key {key!r}")
    if not man.videos and not errors:
        errors.append(f"{path}: manifest lists no videos")
    if errors:
        raise FormatError("\n".join(errors))
    return man


def resolve_config(args, manifest: Optional[RunManifest] = None) -> DatasetConfig:
    """Dataset parameters: ``--config`` beats ``--dataset`` beats the manifest."""
    base = None
    name = getattr(args, "dataset", None) or (manifest.dataset if manifest else None)
    if name:
        base = dataset_config(name)
    config_path = getattr(args, "config", None) or (manifest.config_path if manifest else None)
    if config_path:
        return load_config_file(config_path, base)
    if base is None:
        raise UsageError("no dataset given: use --dataset, --config or a manifest 'dataset' line")
    return base


def _load_video(entry: VideoEntry, config: DatasetConfig):
    video = load_frame_sequence(entry.frames, VideoMeta(entry.video_id, entry.subject_id, config.fps))
    landmarks = parse_landmark_track(entry.landmarks, (video.first_index, video.last_index))
    return video, landmarks


def _ltp_job(job):
    entry, config = job
    video, landmarks = _load_video(entry, config)
    return extract_ltp_features(video, landmarks, config)


def _lbp_job(job):
    entry, config, tau = job
    video, landmarks = _load_video(entry, config)
    return LbpChi2Spotter(config, tau=tau).fit().spot(video, landmarks)


def _map(func, jobs, n_jobs: int):
    """Ordered map, in worker processes when ``n_jobs > 1``."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, jobs))


def _ltp_features(manifest: RunManifest, config: DatasetConfig, n_jobs: int):
    log.info("extracting LTP features of %d videos", len(manifest.videos))
    return _map(_ltp_job, [(v, config) for v in manifest.videos], n_jobs)


def _spotter(args, config: DatasetConfig) -> LtpMlSpotter:
    return LtpMlSpotter(config, C=args.C, random_state=args.seed, d_min=args.d_min,
                        a_min=args.a_min, k_max=args.k_max, nose_veto=not args.no_nose_veto)


def _ground_truth(manifest: RunManifest):
    if manifest.ground_truth is None:
        raise FormatError(f"{manifest.path}: no 'ground_truth' line")
    return parse_ground_truth(manifest.ground_truth)


def _out_dir(args, manifest: Optional[RunManifest] = None) -> Path:
    out = args.out or (manifest.output if manifest else None)
    if out is None:
        raise UsageError("no output directory: use --out")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands ---------------------------------------------------------------

def cmd_spot(args) -> int:
    if args.method == "ltp-ml" and not args.model:
        raise UsageError("--method ltp-ml needs a trained --model")
    manifest = read_manifest(args.manifest)
    config = resolve_config(args, manifest)
    out = _out_dir(args, manifest)
    if args.method == "ltp-ml":
        params = _spotter(args, config).get_params()
        params.pop("config")
        est = LtpMlSpotter.from_model(load_model(args.model), config, **params)
        intervals = est.predict(_ltp_features(manifest, config, args.jobs))
    else:
        jobs = [(v, config, args.tau) for v in manifest.videos]
        intervals = [s for part in _map(_lbp_job, jobs, args.jobs) for s in part]
    atomic_write_text(out / "intervals.csv", intervals_to_csv(intervals))
    log.info("%d intervals written to %s", len(intervals), out / "intervals.csv")
    return 0


def cmd_train(args) -> int:
    manifest = read_manifest(args.manifest)
    config = resolve_config(args, manifest)
    gt = _ground_truth(manifest)
    est = _spotter(args, config).fit(_ltp_features(manifest, config, args.jobs), gt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, est.model_)
    return 0


def cmd_loso(args) -> int:
    manifest = read_manifest(args.manifest)
    config = resolve_config(args, manifest)
    gt = _ground_truth(manifest)
    out = _out_dir(args, manifest)
    features = _ltp_features(manifest, config, args.jobs)
    result = run_loso(features, gt, _spotter(args, config), k=args.k)
    (out / "models").mkdir(exist_ok=True)
    for subject, model in result.models.items():
        save_model(out / "models" / f"fold_{subject}.model", model)
    atomic_write_text(out / "intervals.csv", intervals_to_csv(result.intervals))
    atomic_write_text(out / "report.csv", report_to_csv(result.counts, result.report))
    atomic_write_text(out / "report.json", report_to_json(result.counts, result.report))
    r = result.report
    log.info("LOSO: M=%d N=%d TP=%d FP=%d recall=%s precision=%s F1=%s",
             r.M, r.N, r.A, r.FP, r.recall_D, r.precision_D, r.f1_D)
    return 0


def cmd_evaluate(args) -> int:
    spotted = read_intervals_csv(args.spotted)
    gt = parse_ground_truth(args.ground_truth)
    if args.manifest:
        video_ids = [v.video_id for v in read_manifest(args.manifest).videos]
    else:
        video_ids = sorted({g.video_id for g in gt})
    known = set(video_ids)
    unknown = sorted({s.video_id for s in spotted} - known)
    if unknown:
        raise FormatError(f"{args.spotted}: unknown video id(s): {', '.join(unknown)}")
    counts, report = evaluate(spotted, gt, args.k, video_ids=video_ids)
    out = _out_dir(args)
    atomic_write_text(out / "report.csv", report_to_csv(counts, report))
    atomic_write_text(out / "report.json", report_to_json(counts, report))
    return 0


def cmd_synth(args) -> int:
    if args.suite:
        specs = synthetic_suite(seed=args.seed)
    elif args.specs:
        specs = [load_spec(p) for p in args.specs]
    else:
        raise UsageError("give spec files or --suite")
    out = _out_dir(args)
    manifest = write_dataset(out, specs, dataset=args.dataset or "casme2")
    log.info("wrote %d videos, manifest %s", len(specs), manifest)
    return 0


# --- argument parsing -------------------------------------------------------

def _add_dataset(p):
    p.add_argument("--dataset", type=str.lower, choices=["samm", "casme2"],
                   help="dataset parameter set (overrides the manifest)")
    p.add_argument("--config", help="key = value file overriding dataset parameters")


def _add_ltp(p):
    p.add_argument("--C", type=float, default=1.0, help="SVM regularisation constant")
    p.add_argument("--seed", type=int, default=0, help="solver seed")
    p.add_argument("--d-min", type=float, default=0.2, dest="d_min")
    p.add_argument("--a-min", type=float, default=0.1, dest="a_min",
                   help="relative raw amplitude a positive needs (0 disables)")
    p.add_argument("--k-max", type=int, default=6, dest="k_max")
    p.add_argument("--no-nose-veto", action="store_true", dest="no_nose_veto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mespot", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spot", help="spot intervals in the videos of a manifest")
    p.add_argument("manifest")
    p.add_argument("--method", choices=["ltp-ml", "lbp-chi2"], default="ltp-ml")
    p.add_argument("--model", help="model file from 'train' or 'loso' (ltp-ml)")
    p.add_argument("--tau", type=float, help="peak threshold (lbp-chi2)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_dataset(p)
    _add_ltp(p)
    p.set_defaults(func=cmd_spot)

    p = sub.add_parser("train", help="train an LTP-ML model on all videos of a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--jobs", type=int, default=1)
    _add_dataset(p)
    _add_ltp(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loso", help="leave-one-subject-out training, spotting and evaluation")
    p.add_argument("manifest")
    p.add_argument("--k", type=float, default=0.5, help="IoU needed for a true positive")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_dataset(p)
    _add_ltp(p)
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("evaluate", help="score spotted intervals against ground truth")
    p.add_argument("spotted", help="intervals CSV")
    p.add_argument("ground_truth", help="ground-truth CSV")
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--manifest", help="take the list of videos from this manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="render synthetic videos with landmarks and ground truth")
    p.add_argument("specs", nargs="*", help="synthetic video spec files")
    p.add_argument("--suite", action="store_true",
                   help="render the 12-video benchmark suite instead of spec files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", type=str.lower, choices=["samm", "casme2"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mespot: error: {exc}", file=sys.stderr)
        return 2
    except (MespotError, OSError, ValueError, KeyError) as exc:
        print(f"mespot: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
