"""Detection scoring: IoU, greedy matching, PR curves, AP, muAP, F-beta.

Predictions match ground truth greedily in descending score order; a
prediction claims the unmatched ground-truth box of highest IoU when
that IoU is strictly above the threshold. AP is the area under the
precision-recall curve with the all-point precision envelope, and muAP
averages AP over the ten IoU thresholds 0.50, 0.55, ..., 0.95.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .detect import BoundingBox, DetectionSet
from .model import GroundTruth

MU_AP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two half-open pixel boxes."""
    ix = max(0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass
class MatchResult:
    """Per-prediction match decisions (in descending score order) and counts."""

    matches: list[tuple[int | None, float]] = field(default_factory=list)
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _by_score(boxes: list[BoundingBox]) -> list[BoundingBox]:
    return sorted(boxes, key=lambda b: -b.score)


def match_detections(preds: DetectionSet, gt: GroundTruth, tau: float) -> MatchResult:
    """Greedy one-to-one matching of predictions to ground truth at IoU > tau."""
    result = MatchResult()
    taken = [False] * len(gt.boxes)
    for pred in _by_score(preds.boxes):
        best_iou = 0.0
        best_idx = None
        for gi, gt_box in enumerate(gt.boxes):
            if taken[gi]:
                continue
            value = iou(pred, gt_box)
            if value > best_iou:
                best_iou = value
                best_idx = gi
        if best_idx is not None and best_iou > tau:
            taken[best_idx] = True
            result.matches.append((best_idx, best_iou))
            result.tp += 1
        else:
            result.matches.append((None, best_iou))
            result.fp += 1
    result.fn = len(gt.boxes) - result.tp
    return result


@dataclass
class PRCurve:
    """(recall, precision) per prediction rank, plus the envelope AUC."""

    points: list[tuple[float, float]] = field(default_factory=list)
    auc: float = 0.0


def _gather(preds: list[DetectionSet], gts: list[GroundTruth], tau: float):
    gt_by_image = {g.image_id: g for g in gts}
    total_gt = sum(len(g.boxes) for g in gts)
    decisions = []  # (score, is_tp) per prediction
    for det in sorted(preds, key=lambda d: d.image_id):
        gt = gt_by_image.get(det.image_id, GroundTruth(image_id=det.image_id))
        matched = match_detections(det, gt, tau)
        for pred, (gt_idx, _) in zip(_by_score(det.boxes), matched.matches):
            decisions.append((pred.score, gt_idx is not None))
    decisions.sort(key=lambda d: -d[0])
    return decisions, total_gt


def pr_curve(preds: list[DetectionSet], gts: list[GroundTruth],
             tau: float) -> PRCurve:
    """Global score sweep across images at one IoU threshold."""
    decisions, total_gt = _gather(preds, gts, tau)
    if total_gt == 0:
        raise ValueError("no ground-truth boxes: recall is undefined")
    points = []
    tp = fp = 0
    for _, is_tp in decisions:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))
    return PRCurve(points=points, auc=_envelope_auc(points))


def _envelope_auc(points: list[tuple[float, float]]) -> float:
    if not points:
        return 0.0
    envelope = [0.0] * len(points)
    best = 0.0
    for i in range(len(points) - 1, -1, -1):
        best = max(best, points[i][1])
        envelope[i] = best
    auc = 0.0
    prev_recall = 0.0
    for (recall, _), prec in zip(points, envelope):
        auc += (recall - prev_recall) * prec
        prev_recall = recall
    return auc


def ap(curve: PRCurve) -> float:
    """Area under the PR curve (all-point precision envelope)."""
    return curve.auc


def mean_ap(preds: list[DetectionSet], gts: list[GroundTruth]) -> float:
    """Mean AP over IoU thresholds 0.50 to 0.95 in steps of 0.05."""
    values = [ap(pr_curve(preds, gts, tau)) for tau in MU_AP_THRESHOLDS]
    return sum(values) / len(values)


def precision_recall_at(preds: list[DetectionSet], gts: list[GroundTruth],
                        tau: float) -> tuple[float, float]:
    """Aggregate precision and recall with every emitted box counted."""
    decisions, total_gt = _gather(preds, gts, tau)
    if total_gt == 0:
        raise ValueError("no ground-truth boxes: recall is undefined")
    tp = sum(1 for _, is_tp in decisions if is_tp)
    fp = len(decisions) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / total_gt
    return precision, recall


def f_beta(precision: float, recall: float, beta: float = 2.0) -> float:
    """F-beta score; zero when the denominator vanishes."""
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def evaluate(preds: list[DetectionSet], gts: list[GroundTruth]) -> dict:
    """The headline metric set: F2 and AP at IoU 0.5 and 0.75, plus muAP."""
    out = {}
    for tau, suffix in ((0.5, "50"), (0.75, "75")):
        p, r = precision_recall_at(preds, gts, tau)
        out[f"F2_{suffix}"] = f_beta(p, r, beta=2.0)
        out[f"AP_{suffix}"] = ap(pr_curve(preds, gts, tau))
    out["muAP"] = mean_ap(preds, gts)
    return out


def curve_rows(preds: list[DetectionSet], gts: list[GroundTruth],
               taus=MU_AP_THRESHOLDS) -> list[tuple[float, int, float, float]]:
    """PR-curve points as (tau, rank, recall, precision) rows for CSV export."""
    rows = []
    for tau in taus:
        curve = pr_curve(preds, gts, tau)
        for rank, (recall, precision) in enumerate(curve.points, start=1):
            rows.append((tau, rank, recall, precision))
    return rows
