"""Binary classification metrics from confusion counts.

Zero denominators follow a total convention: precision or recall with an
empty denominator is 0, and F1 is 0 when precision + recall is 0. The raw
counts are always kept so other conventions can be recomputed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

RATES = ("accuracy", "precision", "recall", "f1")
COUNTS = ("tp", "fp", "fn", "tn")


@dataclass(frozen=True)
class TaskMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return asdict(self)


Metrics = dict[str, TaskMetrics]


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int) -> TaskMetrics:
    total = tp + fp + fn + tn
    if total == 0:
        raise ValueError("cannot compute metrics on an empty set")
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return TaskMetrics((tp + tn) / total, precision, recall, f1, tp, fp, fn, tn)


def confusion_counts(pred, label) -> tuple[int, int, int, int]:
    pred = np.asarray(pred, dtype=bool)
    label = np.asarray(label, dtype=bool)
    if pred.shape != label.shape:
        raise ValueError(f"prediction/label shape mismatch {pred.shape} vs {label.shape}")
    tp = int(np.sum(pred & label))
    fp = int(np.sum(pred & ~label))
    fn = int(np.sum(~pred & label))
    tn = int(np.sum(~pred & ~label))
    return tp, fp, fn, tn


def binary_metrics(pred, label) -> TaskMetrics:
    return metrics_from_counts(*confusion_counts(pred, label))
