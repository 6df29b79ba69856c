"""AUC and logloss evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """AUC needs at least one positive and one negative label."""


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged (Mann–Whitney convention), via a stable sort."""
    n = len(values)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.flatnonzero(sorted_vals[1:] != sorted_vals[:-1])
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries, [n - 1]))
    group_rank = (starts + ends) / 2.0 + 1.0
    sizes = ends - starts + 1
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, sizes)
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same shape")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined without both label classes")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def logloss(probabilities: np.ndarray, labels: np.ndarray, eps_p: float = 1e-7) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps_p, 1-eps_p]."""
    p = np.clip(np.asarray(probabilities, dtype=np.float64), eps_p, 1.0 - eps_p)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(frozen=True)
class EvalResult:
    auc: float
    logloss: float
    n_samples: int
    n_positive: int
    n_negative: int


def evaluate(probabilities: np.ndarray, labels: np.ndarray, eps_p: float = 1e-7) -> EvalResult:
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    return EvalResult(
        auc=auc(probabilities, labels),
        logloss=logloss(probabilities, labels, eps_p),
        n_samples=len(labels),
        n_positive=n_pos,
        n_negative=len(labels) - n_pos,
    )
