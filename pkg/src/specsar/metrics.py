"""Confusion-matrix accumulation and IoU / mIoU / OA / macro-F1.

Ratios are formed with exact rational arithmetic and converted to float once,
so each reported value is the correctly rounded rational.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns are predictions."""

    counts: np.ndarray

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValueError("confusion matrices differ in class count")
        return ConfusionMatrix(self.counts + other.counts)

    def add(self, pred, truth) -> None:
        self.counts = accumulate(self, pred, truth).counts


def accumulate(cm: ConfusionMatrix, pred, truth) -> ConfusionMatrix:
    """Return ``cm`` plus the counts of one (pred, truth) pair of label maps."""
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    truth = np.asarray(truth).reshape(-1).astype(np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction and truth differ in size: {pred.size} vs {truth.size}")
    k = cm.n_classes
    for name, arr in (("prediction", pred), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} labels outside 0..{k - 1}")
    counts = np.bincount(truth * k + pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(cm.counts + counts)


def exact_metrics(cm: ConfusionMatrix) -> dict:
    """Metrics as ``Fraction`` values; absent classes get ``None`` IoU."""
    c = cm.counts
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    support = c.sum(axis=1)
    ious: list = []
    f1s = []
    for k in range(cm.n_classes):
        denom = int(tp[k] + fp[k] + fn[k])
        ious.append(Fraction(int(tp[k]), denom) if denom else None)
        if support[k] > 0:
            f1s.append(Fraction(2 * int(tp[k]), int(2 * tp[k] + fp[k] + fn[k])))
    present = [v for v in ious if v is not None]
    total = int(c.sum())
    return {
        "per_class_iou": ious,
        "miou": sum(present, Fraction(0)) / len(present) if present else None,
        "oa": Fraction(int(tp.sum()), total) if total else None,
        "f1": sum(f1s, Fraction(0)) / len(f1s) if f1s else None,
    }


def metrics(cm: ConfusionMatrix) -> dict:
    """Float metrics. Classes absent from both truth and prediction report NaN IoU
    and are left out of mIoU; classes with no ground-truth pixels are left out of F1."""

    def f(v):
        return float("nan") if v is None else float(v)

    exact = exact_metrics(cm)
    return {
        "per_class_iou": [f(v) for v in exact["per_class_iou"]],
        "miou": f(exact["miou"]),
        "oa": f(exact["oa"]),
        "f1": f(exact["f1"]),
    }
