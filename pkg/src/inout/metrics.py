"""Ranking and threshold metrics for image-level defect scores.

Average precision is the step-wise area under the precision-recall curve:
thresholds sweep the unique scores in descending order, tied scores enter as
a group, and each recall increment is weighted by the precision at that
threshold. For all-distinct scores this equals the mean of precisions taken
at the positive samples.
"""

from typing import NamedTuple

import numpy as np

from .errors import UndefinedMetricError, ValidationError


class ThresholdMetrics(NamedTuple):
    precision: float
    recall: float
    # True when no sample scored at or above the threshold; precision is
    # reported as 0.0 in that case rather than left undefined.
    no_positive_predictions: bool


def _check_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1 or scores.shape != labels.shape:
        raise ValidationError(
            f"scores and labels must be equal-length vectors, got {scores.shape} and {labels.shape}"
        )
    if scores.size == 0:
        raise ValidationError("empty score vector")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be finite")
    uniq = set(np.unique(labels).tolist())
    if not uniq <= {0, 1, False, True}:
        raise ValidationError(f"labels must be binary, got values {sorted(uniq)}")
    labels = labels.astype(np.int64)
    if labels.sum() == 0:
        raise UndefinedMetricError("metric undefined: no positive samples")
    return scores, labels


def average_precision(scores, labels) -> float:
    """AP over descending unique score thresholds with tie grouping."""
    scores, labels = _check_inputs(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # Last index of each tie group along the descending sweep.
    boundary = np.nonzero(np.diff(s) != 0)[0]
    group_end = np.append(boundary, s.size - 1)
    cum_tp = np.cumsum(y)[group_end]
    cum_fp = np.cumsum(1 - y)[group_end]
    total_pos = labels.sum()
    precision = cum_tp / (cum_tp + cum_fp)
    recall = cum_tp / total_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def precision_recall_at(scores, labels, threshold: float = 0.5) -> ThresholdMetrics:
    """Precision and recall of the decision rule ``score >= threshold``."""
    scores, labels = _check_inputs(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    if tp + fp == 0:
        # No sample cleared the threshold; positives exist, so recall is 0.
        return ThresholdMetrics(0.0, 0.0, True)
    return ThresholdMetrics(tp / (tp + fp), tp / (tp + fn), False)


def aggregate(values) -> tuple:
    """Mean and population standard deviation (divisor n) of per-seed values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("aggregate needs a nonempty vector of per-seed values")
    return float(arr.mean()), float(arr.std(ddof=0))
