"""Accuracy, ROC curve and AUC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedAUCError(ValueError):
    pass


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal-length 1-D")
    if scores.size == 0:
        raise ValueError("empty input")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def accuracy(scores, labels) -> float:
    """Fraction of jets whose class-1 score lands on the right side of 0.5.

    A score of exactly 0.5 is read as class 1.
    """
    scores, labels = _check(scores, labels)
    return float(np.mean((scores >= 0.5).astype(np.int64) == labels))


def roc_curve(scores, labels) -> RocCurve:
    """ROC points at every distinct score, from (0, 0) to (1, 1).

    Tied scores form a single step, so the curve crosses a tie block along
    its diagonal.
    """
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("ROC/AUC needs both classes present")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return RocCurve(
        thresholds=np.r_[np.inf, s[last]],
        fpr=np.r_[0.0, fp / n_neg],
        tpr=np.r_[0.0, tp / n_pos],
    )


def trapezoid_auc(curve: RocCurve) -> float:
    dx = np.diff(curve.fpr)
    return float(np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def mann_whitney_auc(scores, labels) -> float:
    """P(positive outscores negative) with ties at half credit, via midranks."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(s.size)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[i : j + 1] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels[order] == 1].sum()
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(scores, labels):
    """Return ``(RocCurve, auc)`` with the trapezoidal area under the curve."""
    curve = roc_curve(scores, labels)
    return curve, trapezoid_auc(curve)
