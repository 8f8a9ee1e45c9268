"""
Segmentation metrics from a shared confusion tally.

Conventions for empty denominators: a ratio with nothing to find counts as
perfect (1.0), so a prediction equal to its ground truth scores 1.0 on every
metric, including for empty masks.
"""

import csv
from pathlib import Path
from typing import Iterable, List

import numpy as np

from expomask.errors import DimensionMismatch, EmptyDataset
from expomask.models.image import BinaryMask
from expomask.models.report import ConfusionCounts, MetricRow

REPORT_COLUMNS = ["loss", "dice", "jaccard", "sensitivity", "specificity", "auc", "avg"]


def binarize(y_hat: np.ndarray, threshold: float = 0.5) -> BinaryMask:
    """
    1 where y_hat >= threshold, else 0.

    Args:
        y_hat: Prediction; H x W, or any shape that squeezes to H x W.
        threshold: Decision boundary; values equal to it are positive.
    """
    plane = np.asarray(y_hat)
    if plane.ndim != 2:
        plane = np.squeeze(plane)
    return BinaryMask(m=(plane >= threshold).astype(np.uint8))


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Tally TP / FP / TN / FN of pred against gt."""
    if pred.m.shape != gt.m.shape:
        raise DimensionMismatch(f"Prediction {pred.m.shape} and ground truth {gt.m.shape} differ")
    p = pred.m.astype(bool)
    g = gt.m.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def dice_index(c: ConfusionCounts) -> float:
    """2 TP / (2 TP + FP + FN); 1.0 when both masks are empty."""
    denominator = 2 * c.tp + c.fp + c.fn
    return 1.0 if denominator == 0 else 2 * c.tp / denominator


def jaccard_index(c: ConfusionCounts) -> float:
    """TP / (TP + FP + FN); 1.0 when both masks are empty."""
    denominator = c.tp + c.fp + c.fn
    return 1.0 if denominator == 0 else c.tp / denominator


def sensitivity(c: ConfusionCounts) -> float:
    """TP / (TP + FN); 1.0 when there are no positives."""
    denominator = c.tp + c.fn
    return 1.0 if denominator == 0 else c.tp / denominator


def specificity(c: ConfusionCounts) -> float:
    """TN / (TN + FP); 1.0 when there are no negatives."""
    denominator = c.tn + c.fp
    return 1.0 if denominator == 0 else c.tn / denominator


def auc_balanced(c: ConfusionCounts) -> float:
    """
    Single-threshold balanced accuracy: 1 - (FPR + FNR) / 2.

    An empty denominator contributes no error.
    """
    fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
    fnr = c.fn / (c.fn + c.tp) if c.fn + c.tp else 0.0
    return 1.0 - 0.5 * (fpr + fnr)


def roc_auc(y_hat: np.ndarray, gt: BinaryMask, levels: int = 256) -> float:
    """
    Area under the ROC curve of a soft prediction, trapezoidal over `levels` thresholds.

    Diagnostic only; the report's "auc" column is auc_balanced.
    """
    scores = np.asarray(y_hat, dtype=np.float64).ravel()
    truth = gt.m.astype(bool).ravel()
    if scores.size != truth.size:
        raise DimensionMismatch(f"Prediction has {scores.size} pixels, ground truth {truth.size}")
    positives = int(truth.sum())
    negatives = truth.size - positives
    if positives == 0 or negatives == 0:
        return 1.0

    thresholds = np.linspace(1.0, 0.0, levels)
    tpr = np.array([np.count_nonzero((scores >= t) & truth) for t in thresholds]) / positives
    fpr = np.array([np.count_nonzero((scores >= t) & ~truth) for t in thresholds]) / negatives
    tpr = np.concatenate(([0.0], tpr, [1.0]))
    fpr = np.concatenate(([0.0], fpr, [1.0]))
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def metric_row(loss_name: str, c: ConfusionCounts) -> MetricRow:
    """The five metrics of pooled counts plus their average."""
    values = [dice_index(c), jaccard_index(c), sensitivity(c), specificity(c), auc_balanced(c)]
    return MetricRow(
        loss_name=loss_name,
        dice=values[0],
        jaccard=values[1],
        sensitivity=values[2],
        specificity=values[3],
        auc=values[4],
        avg=sum(values) / 5,
    )


def metric_row_per_image(loss_name: str, counts: List[ConfusionCounts]) -> MetricRow:
    """Metrics computed per image, then averaged over images."""
    if not counts:
        raise EmptyDataset("No images to average over")
    rows = [metric_row(loss_name, c) for c in counts]
    values = [
        sum(getattr(row, field) for row in rows) / len(rows)
        for field in ("dice", "jaccard", "sensitivity", "specificity", "auc")
    ]
    return MetricRow(
        loss_name=loss_name,
        dice=values[0],
        jaccard=values[1],
        sensitivity=values[2],
        specificity=values[3],
        auc=values[4],
        avg=sum(values) / 5,
    )


def pool_counts(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    """Sum confusion counts over images."""
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    return total


# ==================== Report CSV ====================

def format_row(row: MetricRow) -> List[str]:
    return [
        row.loss_name,
        *(f"{getattr(row, field):.6f}" for field in ("dice", "jaccard", "sensitivity", "specificity", "auc", "avg")),
    ]


def write_report(rows: List[MetricRow], path: Path, append: bool = False) -> None:
    """
    Write metric rows as CSV: loss,dice,jaccard,sensitivity,specificity,auc,avg.

    With append=True and an existing file, rows are added below the
    existing header.
    """
    path = Path(path)
    existing = append and path.is_file() and path.stat().st_size > 0
    with open(path, "a" if existing else "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if not existing:
            writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(format_row(row))


def read_report(path: Path) -> List[MetricRow]:
    """Read rows written by write_report (values carry six decimals)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for record in csv.DictReader(f):
            values = {field: float(record[field]) for field in REPORT_COLUMNS[1:]}
            mean = sum(values[field] for field in REPORT_COLUMNS[1:-1]) / 5
            # the stored avg is rounded; keep the row self-consistent
            values["avg"] = mean
            rows.append(MetricRow(loss_name=record["loss"], **values))
    return rows
