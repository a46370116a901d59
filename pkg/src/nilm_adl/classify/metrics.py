"""One-vs-rest sensitivity, specificity and rank-statistic AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    sensitivity: float
    specificity: float
    auc: float

    def __post_init__(self) -> None:
        for name in ("sensitivity", "specificity", "auc"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) and not np.isnan(v):
                raise ValueError(f"{name}={v} outside [0, 1]")


def auc_mann_whitney(pos_scores, neg_scores) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the rank-sum statistic."""
    pos = np.asarray(pos_scores, dtype=float).ravel()
    neg = np.asarray(neg_scores, dtype=float).ravel()
    n_pos, n_neg = pos.size, neg.size
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = scipy.stats.rankdata(np.concatenate([pos, neg]), method="average")
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_score(is_positive, scores) -> float:
    is_positive = np.asarray(is_positive, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    return auc_mann_whitney(scores[is_positive], scores[~is_positive])


def roc_curve(is_positive, scores) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) with one point per distinct score threshold, starting at (0, 0)."""
    is_positive = np.asarray(is_positive, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = is_positive[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(p)[distinct]
    fps = np.cumsum(~p)[distinct]
    tpr = np.r_[0.0, tps / max(p.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~p).sum(), 1)]
    return fpr, tpr


def auc_trapezoid(is_positive, scores) -> float:
    fpr, tpr = roc_curve(is_positive, scores)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def sensitivity_specificity(y_true, y_pred, label) -> tuple[float, float]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    actual = y_true == label
    predicted = y_pred == label
    tp = np.sum(actual & predicted)
    fn = np.sum(actual & ~predicted)
    tn = np.sum(~actual & ~predicted)
    fp = np.sum(~actual & predicted)
    sen = tp / (tp + fn) if tp + fn else float("nan")
    spec = tn / (tn + fp) if tn + fp else float("nan")
    return float(sen), float(spec)


def class_metrics(y_true, y_pred, scores, classes) -> list[ClassMetrics]:
    """Per-label metrics; ``scores[:, k]`` is the score column for ``classes[k]``."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=float)
    out = []
    for k, label in enumerate(classes):
        sen, spec = sensitivity_specificity(y_true, y_pred, label)
        out.append(ClassMetrics(int(label), sen, spec, auc_score(y_true == label, scores[:, k])))
    return out


def macro_average(metrics: list[ClassMetrics]) -> dict[str, float]:
    return {
        "sensitivity": float(np.mean([m.sensitivity for m in metrics])),
        "specificity": float(np.mean([m.specificity for m in metrics])),
        "auc": float(np.mean([m.auc for m in metrics])),
    }
