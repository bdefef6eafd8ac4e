"""Average precision and multi-label mAP.

Ranking is by descending score with ties broken by ascending row index, so
results are reproducible even with heavily tied scores (e.g. hard labels).
"""
from __future__ import annotations

import numpy as np


class NoPositivesError(ValueError):
    """Raised when a class (or a whole score matrix) has no positive."""


def average_precision(scores, truth) -> float:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel()
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    positives = truth > 0
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise NoPositivesError("average precision is undefined without positives")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.arange(1, n_pos + 1) / ranks
    return float(precision_at_hits.sum() / n_pos)


def per_class_ap(scores, truth) -> np.ndarray:
    """AP for every column; NaN for columns without positives."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.shape != truth.shape or scores.ndim != 2:
        raise ValueError(f"score matrix {scores.shape} and truth {truth.shape} must be aligned n x L")
    order = np.argsort(np.ascontiguousarray(-scores.T), axis=1, kind="stable").T
    hits = np.take_along_axis(truth > 0, order, axis=0)
    n_pos = hits.sum(axis=0)
    cum = np.cumsum(hits, axis=0)
    ranks = np.arange(1, scores.shape[0] + 1)[:, None]
    total = np.where(hits, cum / ranks, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_pos > 0, total / n_pos, np.nan)


def mean_average_precision(scores, truth) -> float:
    """Mean AP over the classes that have at least one positive."""
    aps = per_class_ap(scores, truth)
    if np.all(np.isnan(aps)):
        raise NoPositivesError("no class has a positive example")
    return float(np.nanmean(aps))
