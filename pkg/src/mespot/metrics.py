"""Interval-overlap evaluation of spotting results.

A spotted interval is a true positive when its frame IoU with a ground-truth
interval reaches ``k``.  Per video only the counts are meaningful; rates are
computed once over the pooled counts of the whole database.  Rates whose
denominator is zero are reported as ``None`` (``NA`` in CSV, ``null`` in
JSON), never as 0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

from .dataio import GroundTruthInterval
from .fusion import SpottedInterval

UNDEFINED = None


def interval_iou(a, b) -> float:
    """IoU of two inclusive frame intervals (``onset``/``offset`` objects or pairs)."""
    a0, a1 = (a.onset, a.offset) if hasattr(a, "onset") else a
    b0, b1 = (b.onset, b.offset) if hasattr(b, "onset") else b
    inter = min(a1, b1) - max(a0, b0) + 1
    if inter <= 0:
        return 0.0
    union = (a1 - a0 + 1) + (b1 - b0 + 1) - inter
    return inter / union


@dataclass(frozen=True)
class VideoCounts:
    video_id: str
    m: int  # ground-truth intervals
    n: int  # spotted intervals
    a: int  # true positives

    def __post_init__(self):
        if not 0 <= self.a <= min(self.m, self.n):
            raise ValueError(f"TP count {self.a} inconsistent with m={self.m}, n={self.n}")

    @property
    def tp(self) -> int:
        return self.a

    @property
    def fp(self) -> int:
        return self.n - self.a

    @property
    def fn(self) -> int:
        return self.m - self.a


def match_pairs(spotted: Sequence, ground_truth: Sequence, k: float = 0.5) -> list[tuple[int, int]]:
    """One-to-one greedy matching as ``(spotted index, gt index)`` pairs.

    Pairs with IoU >= ``k`` are taken in decreasing IoU order; ties go to the
    earlier ground-truth onset, then the earlier spotted onset.
    """
    candidates = []
    for i, s in enumerate(spotted):
        for j, g in enumerate(ground_truth):
            iou = interval_iou(s, g)
            if iou >= k and iou > 0:
                candidates.append((-iou, g.onset, g.offset, s.onset, s.offset, j, i))
    candidates.sort()
    used_s, used_g, pairs = set(), set(), []
    for *_, j, i in candidates:
        if i in used_s or j in used_g:
            continue
        used_s.add(i)
        used_g.add(j)
        pairs.append((i, j))
    return pairs


def match_intervals(spotted: Sequence, ground_truth: Sequence, k: float = 0.5,
                    video_id: str = "") -> VideoCounts:
    if not video_id:
        first = next(iter(ground_truth), None) or next(iter(spotted), None)
        video_id = getattr(first, "video_id", "")
    a = len(match_pairs(spotted, ground_truth, k))
    return VideoCounts(video_id, len(ground_truth), len(spotted), a)


def _ratio(num, den) -> Optional[float]:
    return num / den if den > 0 else UNDEFINED


@dataclass(frozen=True)
class VideoMetrics:
    recall: Optional[float]
    precision: Optional[float]
    f1: Optional[float]


def video_metrics(counts: VideoCounts) -> VideoMetrics:
    return VideoMetrics(
        recall=_ratio(counts.a, counts.m),
        precision=_ratio(counts.a, counts.n),
        f1=_ratio(2 * counts.a, counts.m + counts.n),
    )


@dataclass(frozen=True)
class EvalReport:
    V: int
    A: int
    M: int
    N: int
    FP: int
    FN: int
    recall_D: Optional[float]
    precision_D: Optional[float]
    f1_D: Optional[float]

    @property
    def TP(self) -> int:
        return self.A


def database_metrics(counts: Iterable[VideoCounts]) -> EvalReport:
    """Pool all videos as one long video and compute recall, precision and F1."""
    counts = list(counts)
    if not counts:
        raise ValueError("need at least one video")
    A = sum(c.a for c in counts)
    M = sum(c.m for c in counts)
    N = sum(c.n for c in counts)
    return report_from_totals(A, N - A, M - A, V=len(counts))


def report_from_totals(tp: int, fp: int, fn: int, V: int = 1) -> EvalReport:
    """Report from pooled TP/FP/FN counts (e.g. one column of a published table)."""
    A, N, M = tp, tp + fp, tp + fn
    recall = _ratio(A, M)
    precision = _ratio(A, N)
    if recall is None or precision is None:
        f1 = UNDEFINED
    elif recall + precision == 0:
        f1 = 0.0
    else:
        f1 = 2 * recall * precision / (recall + precision)
    return EvalReport(V, A, M, N, fp, fn, recall, precision, f1)


def evaluate(spotted: Iterable[SpottedInterval], ground_truth: Iterable[GroundTruthInterval],
             k: float = 0.5, kinds: Sequence[str] = ("micro",),
             video_ids: Optional[Sequence[str]] = None) -> tuple[list[VideoCounts], EvalReport]:
    """Per-video counts and the database report.

    Only ground-truth intervals of the given ``kinds`` count as events to find.
    Videos are those of ``video_ids`` when given, else every video that has
    ground truth of any kind or a spotted interval.
    """
    spotted = list(spotted)
    ground_truth = list(ground_truth)
    if video_ids is None:
        seen = {}
        for item in ground_truth + spotted:
            seen.setdefault(item.video_id, None)
        video_ids = sorted(seen)
    by_s: dict[str, list] = {v: [] for v in video_ids}
    by_g: dict[str, list] = {v: [] for v in video_ids}
    for s in spotted:
        by_s.setdefault(s.video_id, []).append(s)
    for g in ground_truth:
        if g.kind in kinds:
            by_g.setdefault(g.video_id, []).append(g)
    counts = [match_intervals(by_s[v], by_g[v], k, video_id=v) for v in video_ids]
    return counts, database_metrics(counts)


def _fmt(value) -> str:
    return "NA" if value is None else repr(float(value))


def report_to_csv(counts: Sequence[VideoCounts], report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["video_id", "m", "n", "tp", "fp", "fn", "recall", "precision", "f1"])
    for c in counts:
        vm = video_metrics(c)
        writer.writerow([c.video_id, c.m, c.n, c.tp, c.fp, c.fn,
                         _fmt(vm.recall), _fmt(vm.precision), _fmt(vm.f1)])
    writer.writerow(["__database__", report.M, report.N, report.A, report.FP, report.FN,
                     _fmt(report.recall_D), _fmt(report.precision_D), _fmt(report.f1_D)])
    return buf.getvalue()


def report_to_json(counts: Sequence[VideoCounts], report: EvalReport) -> str:
    payload = {
        "database": asdict(report),
        "videos": [dict(video_id=c.video_id, m=c.m, n=c.n, tp=c.tp, fp=c.fp, fn=c.fn,
                        **asdict(video_metrics(c))) for c in counts],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
