"""Electrically-significant-difference (ESD) error counting and pixel metrics.

The ESD metric compares the connected-component structure of a predicted
mask against the ground truth and counts the deviations that change
electrical connectivity: shorts (ground-truth lines merged by a prediction
component), opens (a line split across several prediction components),
false positives (predicted components touching no line), and false
negatives (lines touched by no prediction component).

A predicted component overlapping k >= 2 ground-truth lines contributes
k - 1 shorts, so merging n lines counts as n - 1 short events; opens are
counted symmetrically.  Overlap requires at least ``min_overlap`` shared
pixels (default 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BinaryMask, _require_same_shape, label_components


@dataclass(frozen=True)
class EsdReport:
    """ESD error counts for one prediction/ground-truth pair.

    ``rate_percent`` is ``100 * total / gt_line_count``; it is None when the
    ground truth contains no lines (the "no ground-truth lines" condition).
    """

    opens: int
    shorts: int
    false_positives: int
    false_negatives: int
    gt_line_count: int
    rate_percent: float | None

    @property
    def total(self) -> int:
        return self.opens + self.shorts + self.false_positives + self.false_negatives

    @classmethod
    def from_counts(
        cls, opens: int, shorts: int, false_positives: int, false_negatives: int, gt_line_count: int
    ) -> "EsdReport":
        total = opens + shorts + false_positives + false_negatives
        rate = 100.0 * total / gt_line_count if gt_line_count > 0 else None
        return cls(opens, shorts, false_positives, false_negatives, gt_line_count, rate)

    def to_dict(self) -> dict:
        return {
            "opens": self.opens,
            "shorts": self.shorts,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "total": self.total,
            "gt_line_count": self.gt_line_count,
            "rate_percent": self.rate_percent,
        }


@dataclass(frozen=True)
class PixelMetrics:
    pixel_accuracy: float
    dice: float
    iou: float

    def to_dict(self) -> dict:
        return {"pixel_accuracy": self.pixel_accuracy, "dice": self.dice, "iou": self.iou}


def esd_errors(pred: BinaryMask, gt: BinaryMask, min_overlap: int = 1, connectivity: int = 8) -> EsdReport:
    """Count opens, shorts, FPs and FNs between prediction and ground truth."""
    _require_same_shape(pred.bits, gt.bits)
    if min_overlap < 1:
        raise ValueError("min_overlap must be >= 1")
    pl = label_components(pred, connectivity)
    gl = label_components(gt, connectivity)
    pn, gn = pl.component_count, gl.component_count

    pred_deg = np.zeros(pn + 1, dtype=np.int64)
    gt_deg = np.zeros(gn + 1, dtype=np.int64)
    both = (pl.labels > 0) & (gl.labels > 0)
    if both.any() and pn and gn:
        pair = pl.labels[both].astype(np.int64) * (gn + 1) + gl.labels[both]
        counts = np.bincount(pair, minlength=(pn + 1) * (gn + 1))
        edges = np.nonzero(counts >= min_overlap)[0]
        pred_deg_part = np.bincount(edges // (gn + 1), minlength=pn + 1)
        gt_deg_part = np.bincount(edges % (gn + 1), minlength=gn + 1)
        pred_deg += pred_deg_part
        gt_deg += gt_deg_part

    shorts = int(np.maximum(pred_deg[1:] - 1, 0).sum())
    fps = int((pred_deg[1:] == 0).sum())
    opens = int(np.maximum(gt_deg[1:] - 1, 0).sum())
    fns = int((gt_deg[1:] == 0).sum())
    return EsdReport.from_counts(opens, shorts, fps, fns, gn)


def pixel_metrics(pred: BinaryMask, gt: BinaryMask) -> PixelMetrics:
    """Pixel accuracy, Dice, and IoU; empty-vs-empty scores count as perfect."""
    _require_same_shape(pred.bits, gt.bits)
    p, g = pred.bits, gt.bits
    tp = int((p & g).sum())
    tn = int((~p & ~g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    return _pixel_metrics_from_confusion(tp, tn, fp, fn)


def _pixel_metrics_from_confusion(tp: int, tn: int, fp: int, fn: int) -> PixelMetrics:
    n = tp + tn + fp + fn
    pa = (tp + tn) / n
    if tp + fp + fn == 0:
        return PixelMetrics(pixel_accuracy=pa, dice=1.0, iou=1.0)
    dice = 2 * tp / (2 * tp + fp + fn)
    iou = tp / (tp + fp + fn)
    return PixelMetrics(pixel_accuracy=pa, dice=dice, iou=iou)


def combine_esd_reports(reports: list[EsdReport]) -> EsdReport:
    """Sum per-image reports into an aggregate; rate recomputed from totals."""
    return EsdReport.from_counts(
        opens=sum(r.opens for r in reports),
        shorts=sum(r.shorts for r in reports),
        false_positives=sum(r.false_positives for r in reports),
        false_negatives=sum(r.false_negatives for r in reports),
        gt_line_count=sum(r.gt_line_count for r in reports),
    )
