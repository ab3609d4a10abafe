"""Clustering agreement metrics and constraint prediction accuracy."""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .core import DNK, ConstraintSet, safe_log
from .oracle import label_triplet


def _as_labels(v) -> np.ndarray:
    out = np.asarray(v)
    if out.ndim != 1:
        raise ValueError("label vectors must be 1-D")
    return out


def _contingency(predicted, truth) -> np.ndarray:
    a = _as_labels(predicted)
    b = _as_labels(truth)
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.shape[0]} vs {b.shape[0]}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _pairs(counts: np.ndarray) -> np.ndarray:
    return counts * (counts - 1) / 2.0


def pairwise_f_measure(predicted, truth) -> float:
    """Harmonic mean of precision and recall over same-cluster instance pairs."""
    c = _contingency(predicted, truth)
    if c.sum() < 2:
        raise ValueError("pairwise F-measure needs at least two instances")
    both = _pairs(c).sum()
    pred_pairs = _pairs(c.sum(axis=1)).sum()
    truth_pairs = _pairs(c.sum(axis=0)).sum()
    if pred_pairs + truth_pairs == 0 or both == 0:
        return 0.0
    # equals 2PR/(P+R) with P = both/pred_pairs, R = both/truth_pairs
    return float(2.0 * both / (pred_pairs + truth_pairs))


def ari(predicted, truth) -> float:
    """Adjusted Rand index from the contingency table."""
    c = _contingency(predicted, truth)
    n = c.sum()
    total_pairs = n * (n - 1) / 2.0
    index = _pairs(c).sum()
    pred_pairs = _pairs(c.sum(axis=1)).sum()
    truth_pairs = _pairs(c.sum(axis=0)).sum()
    expected = pred_pairs * truth_pairs / total_pairs if total_pairs else 0.0
    max_index = 0.5 * (pred_pairs + truth_pairs)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def nmi(predicted, truth) -> float:
    """Mutual information normalized by the arithmetic mean of the entropies."""
    c = _contingency(predicted, truth).astype(float)
    n = c.sum()
    p = c / n
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    ha = float(-(pa * safe_log(pa)).sum())
    hb = float(-(pb * safe_log(pb)).sum())
    if ha == 0.0 and hb == 0.0:
        # both sides are a single cluster: identical trivial partitions
        return 1.0
    outer = pa[:, None] * pb[None, :]
    nz = p > 0
    mi = float((p[nz] * (np.log(p[nz]) - np.log(outer[nz]))).sum())
    denom = 0.5 * (ha + hb)
    if denom == 0.0 or mi <= 0.0:
        return 0.0
    return min(mi / denom, 1.0)


def best_map_accuracy(predicted, truth) -> float:
    """Label accuracy maximized over cluster-id permutations (small k only)."""
    c = _contingency(predicted, truth)
    rows, cols = c.shape
    small, large = (rows, cols) if rows <= cols else (cols, rows)
    if small > 9:
        raise ValueError("permutation matching supports at most 9 clusters")
    table = c if rows <= cols else c.T
    best = 0
    for perm in permutations(range(large), small):
        best = max(best, sum(table[i, j] for i, j in enumerate(perm)))
    return float(best) / float(c.sum())


def constraint_accuracy(assignments, constraints: ConstraintSet, yn_only: bool = False) -> float:
    """Fraction of constraints whose observed answer matches the answer implied
    by the assignments. ``yn_only`` scores only yes/no constraints (for
    variants that never see don't-know answers)."""
    a = _as_labels(assignments)
    hits = 0
    total = 0
    for t in constraints.triplets:
        if yn_only and t.label == DNK:
            continue
        total += 1
        if label_triplet(a[t.t1], a[t.t2], a[t.t3]) == t.label:
            hits += 1
    if total == 0:
        return 0.0
    return hits / total
