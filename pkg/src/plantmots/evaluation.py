"""HOTA, DetA, AssA, AssRe and AssPr between ground-truth and predicted mask tracks.

Detections are matched per frame: at each localization threshold the
one-to-one assignment maximizing total mask IoU among pairs with
IoU >= threshold is chosen. This differs from the official TrackEval kit,
which also folds association scores into the matching, so numbers can
deviate slightly from it on sequences with ambiguous overlaps.

Per threshold, AssRe and AssPr are averaged over true positives and AssA is
derived from them as ``AssRe * AssPr / (AssRe + AssPr - AssRe * AssPr)``.
The TP-averaged pairwise accuracy used by TrackEval is reported alongside as
``AssA_tp_mean``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, FrameRangeMismatch
from .mots_io import Annotation, FrameSeries, string_to_counts

ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))
METRICS = ("HOTA", "DetA", "AssA", "AssRe", "AssPr")


class _Runs:
    """Foreground of an RLE mask as half-open column-major index intervals,
    plus its inclusive pixel bounding box ``(x1, y1, x2, y2)``."""

    __slots__ = ("starts", "ends", "area", "box")

    def __init__(self, rle: str, height: int):
        counts = np.asarray(string_to_counts(rle), dtype=np.int64)
        edges = np.cumsum(counts)
        starts = edges[0::2][: counts.size // 2]
        ends = edges[1::2]
        keep = ends > starts
        self.starts = starts[keep]
        self.ends = ends[keep]
        self.area = int((self.ends - self.starts).sum())
        self.box = None
        if self.area:
            first, last = self.starts // height, (self.ends - 1) // height
            if (first != last).any():  # some run wraps into the next column
                y1, y2 = 0, height - 1
            else:
                y1, y2 = int((self.starts % height).min()), int(((self.ends - 1) % height).max())
            self.box = (int(first[0]), y1, int(last[-1]), y2)

    def intersection(self, other: "_Runs") -> int:
        a, b = self.box, other.box
        if a is None or b is None:
            return 0
        if a[0] > b[2] or b[0] > a[2] or a[1] > b[3] or b[1] > a[3]:
            return 0
        lo = np.maximum.outer(self.starts, other.starts)
        hi = np.minimum.outer(self.ends, other.ends)
        return int(np.clip(hi - lo, 0, None).sum())


def _runs_iou_matrix(gt: Sequence[_Runs], pred: Sequence[_Runs]) -> np.ndarray:
    out = np.zeros((len(gt), len(pred)))
    for i, g in enumerate(gt):
        for j, p in enumerate(pred):
            inter = g.intersection(p)
            if inter:
                out[i, j] = inter / (g.area + p.area - inter)
    return out


class _RunCache(dict):
    def __missing__(self, key):
        runs = self[key] = _Runs(*key)
        return runs


def annotation_iou_matrix(gt: Sequence[Annotation], pred: Sequence[Annotation], cache=None) -> np.ndarray:
    """Mask IoU between two annotation lists of the same frame."""
    _check_dims(gt, pred)
    cache = _RunCache() if cache is None else cache
    return _runs_iou_matrix(
        [cache[a.rle, a.image_height] for a in gt], [cache[a.rle, a.image_height] for a in pred]
    )


@dataclass
class FrameMatch:
    matches: list[tuple[int, int]]  # (gt index, pred index)
    unmatched_gt: list[int]
    unmatched_pred: list[int]


def match_on_iou(iou: np.ndarray, alpha: float) -> FrameMatch:
    n, m = iou.shape
    if n == 0 or m == 0:
        return FrameMatch([], list(range(n)), list(range(m)))
    ok = iou >= alpha - 1e-12
    rows, cols = linear_sum_assignment(-np.where(ok, iou, 0.0))
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if ok[r, c]]
    mg = {r for r, _ in pairs}
    mp = {c for _, c in pairs}
    return FrameMatch(pairs, [i for i in range(n) if i not in mg], [j for j in range(m) if j not in mp])


def _check_dims(gt: Sequence[Annotation], pred: Sequence[Annotation]):
    sizes = {(a.image_height, a.image_width) for a in list(gt) + list(pred)}
    if len(sizes) > 1:
        raise DimensionMismatch(f"image sizes differ within a frame: {sorted(sizes)}")


def frame_match(gt: Sequence[Annotation], pred: Sequence[Annotation], alpha_loc: float = 0.5) -> FrameMatch:
    return match_on_iou(annotation_iou_matrix(gt, pred), alpha_loc)


@dataclass
class MetricsReport:
    """Percentages averaged over the localization thresholds."""

    HOTA: float
    DetA: float
    AssA: float
    AssRe: float
    AssPr: float
    per_threshold: list[dict] = field(default_factory=list)

    def summary(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRICS}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def format_text(self, name: str = "COMBINED") -> str:
        head = f"{'':<12}" + "".join(f"{k:>10}" for k in METRICS)
        row = f"{name:<12}" + "".join(f"{getattr(self, k):>10.3f}" for k in METRICS)
        return head + "\n" + row


def _assa(re: float, pr: float) -> float:
    den = re + pr - re * pr
    return re * pr / den if den > 0 else 0.0


def _row(alpha, tp, fn, fp, ass_re, ass_pr, ass_tp) -> dict:
    det_a = tp / (tp + fn + fp) if tp + fn + fp else 0.0
    ass_a = _assa(ass_re, ass_pr)
    return {
        "alpha": alpha,
        "HOTA": 100 * math.sqrt(det_a * ass_a),
        "DetA": 100 * det_a,
        "AssA": 100 * ass_a,
        "AssRe": 100 * ass_re,
        "AssPr": 100 * ass_pr,
        "AssA_tp_mean": 100 * ass_tp,
        "TP": tp,
        "FN": fn,
        "FP": fp,
    }


def _report(rows: list[dict]) -> MetricsReport:
    means = {k: float(np.mean([r[k] for r in rows])) for k in METRICS}
    return MetricsReport(**means, per_threshold=rows)


def _frame_pairs(gt: FrameSeries, pred: FrameSeries, frame_range):
    gt_ids = gt.frame_ids
    if frame_range is None and gt_ids:
        frame_range = (gt_ids[0], gt_ids[-1])
    pred_ids = pred.frame_ids
    if pred_ids:
        if frame_range is None or pred_ids[0] < frame_range[0] or pred_ids[-1] > frame_range[1]:
            raise FrameRangeMismatch(f"prediction frames {pred_ids[0]}..{pred_ids[-1]} outside ground-truth range {frame_range}")
    gmap = dict(gt.frames)
    pmap = dict(pred.frames)
    for f in sorted(set(gmap) | set(pmap)):
        yield gmap.get(f, []), pmap.get(f, [])


def evaluate(gt: FrameSeries, pred: FrameSeries, frame_range: tuple[int, int] | None = None) -> MetricsReport:
    """Score ``pred`` against ``gt``.

    Prediction frames must lie within ``frame_range`` (default: the first to
    last ground-truth frame); otherwise FrameRangeMismatch is raised.
    """
    frames = []
    cache = _RunCache()
    for g, p in _frame_pairs(gt, pred, frame_range):
        iou = annotation_iou_matrix(g, p, cache)
        frames.append(([a.object_id for a in g], [a.object_id for a in p], iou))
    return evaluate_frames(frames)


def evaluate_frames(frames) -> MetricsReport:
    """Metrics from ``(gt_ids, pred_ids, iou)`` triples, one per frame."""
    gt_count: dict[int, int] = {}
    pred_count: dict[int, int] = {}
    for g_ids, p_ids, _ in frames:
        for g in g_ids:
            gt_count[g] = gt_count.get(g, 0) + 1
        for p in p_ids:
            pred_count[p] = pred_count.get(p, 0) + 1
    n_gt = sum(gt_count.values())
    n_pred = sum(pred_count.values())

    rows = []
    for alpha in ALPHAS:
        pair_tp: dict[tuple[int, int], int] = {}
        tp = 0
        for g_ids, p_ids, iou in frames:
            fm = match_on_iou(iou, alpha)
            for i, j in fm.matches:
                key = (g_ids[i], p_ids[j])
                pair_tp[key] = pair_tp.get(key, 0) + 1
            tp += len(fm.matches)
        ass_re = ass_pr = ass_tp = 0.0
        if tp:
            for (g, p), c in pair_tp.items():
                ass_re += c * c / gt_count[g]
                ass_pr += c * c / pred_count[p]
                ass_tp += c * c / (gt_count[g] + pred_count[p] - c)
            ass_re /= tp
            ass_pr /= tp
            ass_tp /= tp
        rows.append(_row(alpha, tp, n_gt - tp, n_pred - tp, ass_re, ass_pr, ass_tp))
    return _report(rows)


def combine_reports(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Pool several sequences: detection counts summed, association terms TP-weighted."""
    rows = []
    for k, alpha in enumerate(ALPHAS):
        per = [r.per_threshold[k] for r in reports]
        tp = sum(r["TP"] for r in per)
        fn = sum(r["FN"] for r in per)
        fp = sum(r["FP"] for r in per)
        w = [r["TP"] for r in per]
        if tp:
            ass_re = sum(wi * r["AssRe"] for wi, r in zip(w, per)) / tp / 100
            ass_pr = sum(wi * r["AssPr"] for wi, r in zip(w, per)) / tp / 100
            ass_tp = sum(wi * r["AssA_tp_mean"] for wi, r in zip(w, per)) / tp / 100
        else:
            ass_re = ass_pr = ass_tp = 0.0
        rows.append(_row(alpha, tp, fn, fp, ass_re, ass_pr, ass_tp))
    return _report(rows)
