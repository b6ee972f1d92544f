"""Evaluation metrics and dataset splitting.

All metrics are reported for the positive (illegal, class 1) side:
precision, recall, and F1 with the 0/0 -> 0 convention, plus
precision-recall curves over the distinct score thresholds and the
step-interpolated average precision.  The stratified splitter keeps the
class ratio between train and test at a fixed seed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class UndefinedRecallError(ValueError):
    """Recall asked for with no positive labels present."""


class StratificationError(ValueError):
    """A class is too small to appear in both sides of a split."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def confusion(y_true: Sequence[int], y_pred: Sequence[int],
              positive: int = 1) -> ConfusionCounts:
    if len(y_true) != len(y_pred):
        raise ValueError(
            f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions"
        )
    tp = fp = fn = tn = 0
    for truth, pred in zip(y_true, y_pred):
        if pred == positive:
            if truth == positive:
                tp += 1
            else:
                fp += 1
        else:
            if truth == positive:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_score(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fp
    return counts.tp / denom if denom else 0.0


def recall_score(counts: ConfusionCounts) -> float:
    denom = counts.tp + counts.fn
    return counts.tp / denom if denom else 0.0


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both terms are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_score(counts: ConfusionCounts) -> float:
    return f1_from_precision_recall(precision_score(counts),
                                    recall_score(counts))


def prf(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, f1) for the counts' positive class."""
    p = precision_score(counts)
    r = recall_score(counts)
    return p, r, f1_from_precision_recall(p, r)


def evaluate_predictions(y_true: Sequence[int], y_pred: Sequence[int],
                         positive: int = 1) -> tuple[float, float, float]:
    """Convenience: confusion then prf in one step."""
    return prf(confusion(y_true, y_pred, positive))


def pr_curve(y_true: Sequence[int], scores: Sequence[float]) -> list[PRPoint]:
    """One point per distinct score, thresholds descending.

    At threshold t a row is predicted positive when its score >= t, so
    successive points accumulate rows in descending score order.
    Precision and recall come from exact integer counts.
    """
    if len(y_true) != len(scores):
        raise ValueError(
            f"length mismatch: {len(y_true)} labels vs {len(scores)} scores"
        )
    labels = [int(v) for v in y_true]
    total_pos = sum(1 for v in labels if v == 1)
    if total_pos == 0:
        raise UndefinedRecallError("no positive labels: recall is undefined")

    order = sorted(range(len(labels)), key=lambda i: -float(scores[i]))
    points: list[PRPoint] = []
    tp = fp = 0
    i = 0
    while i < len(order):
        threshold = float(scores[order[i]])
        # absorb the whole tie group before emitting a point
        while i < len(order) and float(scores[order[i]]) == threshold:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(PRPoint(
            threshold=threshold,
            precision=tp / (tp + fp),
            recall=tp / total_pos,
        ))
    return points


def average_precision(y_true: Sequence[int], scores: Sequence[float]) -> float:
    """Step-interpolated area: sum of (R_n - R_{n-1}) * P_n."""
    points = pr_curve(y_true, scores)
    total = 0.0
    previous_recall = 0.0
    for point in points:
        total += (point.recall - previous_recall) * point.precision
        previous_recall = point.recall
    return total


def stratified_split_indices(labels: Sequence[int], test_fraction: float,
                             seed: int) -> tuple[list[int], list[int]]:
    """Per-class shuffled split; floor(n_class * fraction) rows go to test.

    Returned index lists are sorted ascending, so row order inside each
    side matches the input order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = [int(v) for v in labels]
    rng = np.random.default_rng(seed)

    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0, 1):
        members = np.array([i for i, v in enumerate(labels) if v == cls])
        if len(members) < 2:
            raise StratificationError(
                f"class {cls} has {len(members)} rows; need at least 2 to split"
            )
        rng.shuffle(members)
        n_test = int(len(members) * test_fraction)
        # both sides must keep at least one row of every class
        n_test = max(1, min(n_test, len(members) - 1))
        test_idx.extend(int(i) for i in members[:n_test])
        train_idx.extend(int(i) for i in members[n_test:])
    return sorted(train_idx), sorted(test_idx)


def stratified_split(X: Sequence[Sequence[float]], y: Sequence[int],
                     test_fraction: float, seed: int):
    """Split (X, y) into (X_train, y_train, X_test, y_test) arrays."""
    X = np.asarray(X, dtype=np.float64)
    y_arr = np.asarray([int(v) for v in y], dtype=np.int64)
    if len(X) != len(y_arr):
        raise ValueError(f"length mismatch: {len(X)} rows vs {len(y_arr)} labels")
    train_idx, test_idx = stratified_split_indices(y_arr.tolist(),
                                                   test_fraction, seed)
    return X[train_idx], y_arr[train_idx], X[test_idx], y_arr[test_idx]


# ---------------------------------------------------------------------------
# report CSV writers
# ---------------------------------------------------------------------------

def serialize_metrics_table(rows: Iterable[dict]) -> str:
    """Experiment matrix as CSV: one row per (algorithm, dataset) pair."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("algorithm", "dataset", "precision", "recall", "f1",
                     "average_precision"))
    for row in rows:
        writer.writerow((
            row["algorithm"], row["dataset"],
            f"{row['precision']:.6f}", f"{row['recall']:.6f}",
            f"{row['f1']:.6f}", f"{row['average_precision']:.6f}",
        ))
    return buf.getvalue()


def serialize_pr_curve(points: Sequence[PRPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("threshold", "precision", "recall"))
    for point in points:
        writer.writerow((f"{point.threshold:.10g}",
                         f"{point.precision:.6f}", f"{point.recall:.6f}"))
    return buf.getvalue()
