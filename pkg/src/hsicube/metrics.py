"""Confusion matrix and derived classification metrics.

Per-class precision/recall/F1 use a one-vs-rest reduction of the K x K
matrix (rows = true class, columns = predicted class); overall accuracy is
trace over total. Metrics with a zero denominator are reported as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion matrix entries must be nonnegative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    matrix: ConfusionMatrix


def confusion(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    """Count matrix with counts[t][p] = #{i : true=t and pred=p}."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"label arrays must be equal-length 1-D, got {t.shape} vs {p.shape}")
    if t.size and (t.min() < 0 or t.max() >= num_classes or p.min() < 0 or p.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    counts = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return ConfusionMatrix(counts.reshape(num_classes, num_classes))


def report(matrix: ConfusionMatrix) -> EvalReport:
    """Accuracy plus per-class precision/recall/F1 from a confusion matrix."""
    counts = matrix.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    col = counts.sum(axis=0).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, tp / col, 0.0)
        recall = np.where(row > 0, tp / row, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return EvalReport(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        matrix=matrix,
    )


def report_to_json(rep: EvalReport) -> str:
    payload = {
        "accuracy": rep.accuracy,
        "classes": [
            {
                "class": c,
                "precision": float(rep.precision[c]),
                "recall": float(rep.recall[c]),
                "f1": float(rep.f1[c]),
            }
            for c in range(rep.matrix.num_classes)
        ],
        "confusion": rep.matrix.counts.tolist(),
    }
    return json.dumps(payload, indent=2)


def matrix_to_csv(matrix: ConfusionMatrix) -> str:
    k = matrix.num_classes
    lines = ["true\\pred," + ",".join(str(c) for c in range(k))]
    for t in range(k):
        lines.append(str(t) + "," + ",".join(str(int(v)) for v in matrix.counts[t]))
    return "\n".join(lines) + "\n"
