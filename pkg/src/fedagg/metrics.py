"""Accuracy and AUROC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    auroc: float | None
    n_examples: int


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ShapeError(f"predictions {predictions.shape} and labels {labels.shape} differ")
    if len(labels) == 0:
        raise ShapeError("accuracy of an empty set is undefined")
    return float(np.count_nonzero(predictions == labels)) / len(labels)


def average_ranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], len(values)]
    run_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(values))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC: P(s+ > s-) + 0.5 P(s+ = s-), via average ranks.

    Average ranks are half-integers, so the U statistic is exact and matches an
    all-pairs count bit for bit.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("auroc labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative examples")
    ranks_sum = float(average_ranks(scores)[pos].sum())
    u = ranks_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate(probs: np.ndarray, labels) -> EvalReport:
    """Accuracy of the argmax class; AUROC of class-1 scores for binary tasks."""
    labels = np.asarray(labels)
    acc = accuracy(probs.argmax(axis=1), labels)
    auc = None
    if probs.shape[1] == 2:
        try:
            auc = auroc(probs[:, 1], labels)
        except UndefinedMetricError:
            auc = None
    return EvalReport(acc, auc, len(labels))
