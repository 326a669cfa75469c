"""Ranking metrics: AUC, F1, and recall at top percent (RATP).

RATP@r is the recall over only the floor(r% * N) highest-scored
instances — the operational metric when only a fixed fraction of
transactions can be challenged. r is a percentage: ratp(s, y, 0.05)
inspects the top 0.05%, i.e. 5 of 10,000.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DataError

__all__ = ["auc", "f1", "ratp", "best_f1_threshold"]


def _as_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    return s, y.astype(np.int64)


def auc(scores, labels) -> float:
    """P(score+ > score-) + 0.5 P(tie), via average ranks."""
    s, y = _as_arrays(scores, labels)
    P = int(y.sum())
    N = y.size - P
    if P == 0 or N == 0:
        raise DataError("AUC is undefined with a single class")
    _, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    csum = np.cumsum(counts)
    ranks = csum[inv] - (counts[inv] - 1) / 2.0
    return float((ranks[y == 1].sum() - P * (P + 1) / 2.0) / (P * N))


def f1(scores, labels, threshold: float) -> float:
    """Harmonic mean of precision and recall at the threshold
    (prediction positive when score >= threshold); 0 by convention when
    nothing is predicted positive."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    s, y = _as_arrays(scores, labels)
    pred = s >= threshold
    tp = int((pred & (y == 1)).sum())
    fp = int((pred & (y == 0)).sum())
    fn = int((~pred & (y == 1)).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def best_f1_threshold(scores, labels, grid_points: int = 99):
    """Pick the threshold maximizing F1 over an evenly spaced grid;
    first maximum wins for determinism. Returns (threshold, f1)."""
    grid = np.linspace(0.01, 0.99, grid_points)
    best_t, best_f = grid[0], -1.0
    for t in grid:
        v = f1(scores, labels, float(t))
        if v > best_f:
            best_t, best_f = float(t), v
    return best_t, best_f


def ratp(scores, labels, r_percent: float) -> float:
    """Recall among the floor(r_percent/100 * N) top-scored instances.
    Ties are broken by stable instance order."""
    if not 0.0 < r_percent <= 100.0:
        raise ValueError(f"r_percent must be in (0, 100], got {r_percent}")
    s, y = _as_arrays(scores, labels)
    total_pos = int(y.sum())
    if total_pos == 0:
        raise DataError("RATP is undefined with no positive instances")
    m = int(np.floor(r_percent / 100.0 * s.size))
    if m == 0:
        warnings.warn(f"top {r_percent}% of {s.size} instances is empty; RATP set to 0")
        return 0.0
    top = np.argsort(-s, kind="stable")[:m]
    return float(y[top].sum() / total_pos)
