"""Binary-detection metrics: accuracy, F1, trapezoidal ROC AUC, detection rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dmdetect.errors import ParameterError


@dataclass
class MetricsReport:
    accuracy: float
    f1: float
    auc: float | None  # None when only one class is present
    detection_rate: float | None  # recall of class 1; None without positives


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by trapezoidal integration over thresholds.

    Equals the pairwise-comparison (Mann-Whitney) statistic with ties
    counted 1/2.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("AUC undefined: both classes must be present")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = pos[order].astype(np.float64)
    tp = np.cumsum(p)
    fp = np.cumsum(1.0 - p)
    # keep only the last point of each tied-score run
    last = np.r_[s[1:] != s[:-1], True]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return float(np.trapezoid(tpr, fpr))


def evaluate_metrics(scores, labels) -> MetricsReport:
    """Threshold-0 accuracy/F1/detection rate plus AUC over all thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ParameterError("scores and labels must have equal length")
    if len(labels) == 0:
        raise ParameterError("empty input")
    preds = (scores > 0).astype(int)
    accuracy = float(np.mean(preds == labels))
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    # F1 with zero predicted or actual positives is defined as 0
    f1 = 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    n_pos = int(np.sum(labels == 1))
    detection_rate = tp / n_pos if n_pos else None
    try:
        auc = roc_auc(scores, labels)
    except ParameterError:
        auc = None
    return MetricsReport(accuracy=accuracy, f1=f1, auc=auc, detection_rate=detection_rate)


def mean_report(reports: list[MetricsReport]) -> MetricsReport:
    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    return MetricsReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        auc=_mean([r.auc for r in reports]),
        detection_rate=_mean([r.detection_rate for r in reports]),
    )
