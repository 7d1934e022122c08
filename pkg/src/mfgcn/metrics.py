"""Classification metrics: one-vs-all confusion rates, F2 and ROC/AUC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RATE_NAMES = ("precision", "recall", "specificity", "f2")


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def f2_score(precision: float, recall: float) -> float:
    den = 4.0 * precision + recall
    return 5.0 * precision * recall / den if den > 0 else 0.0


def binary_rates(tp: int, fp: int, fn: int, tn: int) -> dict:
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return {"precision": p, "recall": r, "specificity": _ratio(tn, tn + fp), "f2": f2_score(p, r)}


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def roc_curve(y_binary, scores) -> tuple:
    """(fpr, tpr, thresholds) sweeping every distinct score, highest first.

    The curve starts at (0, 0) with an infinite threshold.
    """
    y = np.asarray(y_binary, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    thr = np.unique(s)[::-1]
    tp = np.array([np.count_nonzero(y & (s >= t)) for t in thr], dtype=np.float64)
    fp = np.array([np.count_nonzero(~y & (s >= t)) for t in thr], dtype=np.float64)
    tpr = np.concatenate([[0.0], tp / n_pos if n_pos else np.zeros_like(tp)])
    fpr = np.concatenate([[0.0], fp / n_neg if n_neg else np.zeros_like(fp)])
    return fpr, tpr, np.concatenate([[np.inf], thr])


def trapezoid_auc(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr), np.asarray(tpr)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: Optional[float]


def roc_auc_ovr(y_true, y_scores) -> dict:
    """One-vs-all ROC per class. A class with no positives (or no negatives) gets ``auc=None``."""
    y = np.asarray(y_true, dtype=np.int64)
    s = np.asarray(y_scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] < 2:
        raise ValueError(f"scores must be n x c with c >= 2, got {s.shape}")
    out = {}
    for c in range(s.shape[1]):
        pos = y == c
        fpr, tpr, thr = roc_curve(pos, s[:, c])
        defined = pos.any() and (~pos).any()
        out[c] = RocCurve(fpr, tpr, thr, trapezoid_auc(fpr, tpr) if defined else None)
    return out


@dataclass
class MetricsReport:
    confusion: np.ndarray
    per_class: list
    weighted: dict
    accuracy: float
    roc: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class": self.per_class,
            "weighted": self.weighted,
            "accuracy": self.accuracy,
            "auc": {str(c): r.auc for c, r in self.roc.items()},
            "flags": self.flags,
        }

    def roc_rows(self) -> list:
        rows = []
        for c, r in self.roc.items():
            for f, t, th in zip(r.fpr, r.tpr, r.thresholds):
                rows.append({"class": c, "fpr": float(f), "tpr": float(t), "threshold": float(th)})
        return rows


def evaluate(y_true, y_pred, y_scores=None, n_classes: Optional[int] = None) -> MetricsReport:
    """One-vs-all rates per class and their support-weighted averages."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred lengths differ")
    if n_classes is None:
        n_classes = int(max(y_true.max(initial=0), y_pred.max(initial=0)) + 1)
        if y_scores is not None:
            n_classes = max(n_classes, np.asarray(y_scores).shape[1])
    cm = confusion_matrix(y_true, y_pred, n_classes)
    n = cm.sum()
    flags = []
    per_class = []
    for c in range(n_classes):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum() - tp)
        fn = int(cm[c, :].sum() - tp)
        tn = int(n - tp - fp - fn)
        rates = binary_rates(tp, fp, fn, tn)
        if tp + fn == 0:
            flags.append(f"class {c}: absent from y_true, recall undefined (reported 0)")
        if tp + fp == 0:
            flags.append(f"class {c}: never predicted, precision undefined (reported 0)")
        per_class.append({"class": c, "support": tp + fn, "tp": tp, "fp": fp, "fn": fn, "tn": tn, **rates})
    support = np.array([pc["support"] for pc in per_class], dtype=np.float64)
    w = support / support.sum() if support.sum() else np.zeros_like(support)
    weighted = {k: float(np.sum(w * [pc[k] for pc in per_class])) for k in RATE_NAMES}
    roc = {}
    if y_scores is not None:
        roc = roc_auc_ovr(y_true, y_scores)
        for c, r in roc.items():
            if r.auc is None:
                flags.append(f"class {c}: AUC undefined (no positives or no negatives)")
    return MetricsReport(cm, per_class, weighted, float(np.trace(cm) / n) if n else 0.0, roc, flags)


def predict_labels(probs) -> np.ndarray:
    """Argmax per row; ties go to the lowest class index."""
    return np.argmax(np.asarray(probs), axis=1)
