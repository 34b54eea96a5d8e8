"""Clustering and reconstruction evaluation metrics.

All clustering scores (homogeneity, completeness, V-measure, Rand score,
adjusted Rand score) are computed from a shared contingency table so the
different metrics are guaranteed to see the same pair/entropy counts.
Entropies use the natural logarithm; the base cancels in every ratio but is
fixed so intermediate values are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ContingencyTable",
    "contingency",
    "homogeneity",
    "completeness",
    "v_measure",
    "rand_score",
    "adjusted_rand",
    "euclidean",
    "spectral_angle",
]


@dataclass(frozen=True)
class ContingencyTable:
    """Cross-tabulation of true classes (rows) against predicted clusters (columns)."""

    counts: np.ndarray  # (|classes|, |clusters|) non-negative ints
    n: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or (counts < 0).any():
            raise ValueError("contingency counts must be a non-negative 2-d array")
        if int(counts.sum()) != self.n:
            raise ValueError("contingency counts do not sum to n")

    @property
    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def contingency(true_labels, pred_labels) -> ContingencyTable:
    """Build the contingency table counts[c][k] = |{i : true_i = c and pred_i = k}|.

    Rows/columns are ordered by sorted unique label value, which keeps the
    table deterministic for a given pair of labelings.
    """
    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    if true_labels.shape != pred_labels.shape or true_labels.ndim != 1:
        raise ValueError("label arrays must be 1-d and of equal length")
    if true_labels.size == 0:
        raise ValueError("cannot build a contingency table from empty labelings")
    _, ti = np.unique(true_labels, return_inverse=True)
    _, pi = np.unique(pred_labels, return_inverse=True)
    counts = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    return ContingencyTable(counts=counts, n=int(true_labels.size))


def _entropy(marginals: np.ndarray, n: int) -> float:
    p = marginals[marginals > 0] / n
    return float(-(p * np.log(p)).sum())


def _conditional_entropy(counts: np.ndarray, cond_marginals: np.ndarray, n: int, axis: int) -> float:
    # H(rows | cols) when axis=0 conditions on columns, and vice versa.
    total = 0.0
    nz = counts > 0
    joint = counts[nz] / n
    if axis == 0:
        cond = np.broadcast_to(cond_marginals[None, :], counts.shape)[nz] / n
    else:
        cond = np.broadcast_to(cond_marginals[:, None], counts.shape)[nz] / n
    total = -(joint * np.log(joint / cond)).sum()
    return float(total)


def homogeneity(table: ContingencyTable) -> float:
    """1 - H(C|K)/H(C); 1.0 by convention when there is a single true class."""
    h_c = _entropy(table.row_marginals, table.n)
    if h_c == 0.0:
        return 1.0
    h_c_given_k = _conditional_entropy(table.counts, table.col_marginals, table.n, axis=0)
    return 1.0 - h_c_given_k / h_c


def completeness(table: ContingencyTable) -> float:
    """1 - H(K|C)/H(K); 1.0 by convention when there is a single cluster.

    Computed as homogeneity of the transposed table so the role-swap duality
    completeness(C, K) == homogeneity(K, C) holds bit for bit.
    """
    return homogeneity(ContingencyTable(counts=table.counts.T, n=table.n))


def v_measure(h: float, c: float, beta: float = 1.0) -> float:
    """Weighted harmonic combination (1+beta)*h*c / (beta*h + c).

    beta = 1 is the harmonic mean; beta < 1 weights homogeneity more.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if not (0.0 <= h <= 1.0 and 0.0 <= c <= 1.0):
        raise ValueError("h and c must lie in [0, 1]")
    denom = beta * h + c
    if denom == 0.0:
        return 0.0
    return (1.0 + beta) * h * c / denom


def _comb2(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    return x * (x - 1.0) / 2.0


def rand_score(table: ContingencyTable) -> float:
    """Fraction of point pairs on which the two partitions agree."""
    n = table.n
    if n < 2:
        raise ValueError("Rand score requires at least 2 samples")
    total_pairs = n * (n - 1) / 2.0
    same_both = _comb2(table.counts).sum()
    same_true = _comb2(table.row_marginals).sum()
    same_pred = _comb2(table.col_marginals).sum()
    # pairs split in both partitions
    diff_both = total_pairs - same_true - same_pred + same_both
    return float((same_both + diff_both) / total_pairs)


def adjusted_rand(table: ContingencyTable) -> float:
    """Chance-corrected Rand index: (Index - Expected) / (Max - Expected)."""
    n = table.n
    if n < 2:
        raise ValueError("adjusted Rand score requires at least 2 samples")
    total_pairs = n * (n - 1) / 2.0
    index = _comb2(table.counts).sum()
    same_true = _comb2(table.row_marginals).sum()
    same_pred = _comb2(table.col_marginals).sum()
    expected = same_true * same_pred / total_pairs
    max_index = 0.5 * (same_true + same_pred)
    if max_index == expected:
        return 0.0
    return float((index - expected) / (max_index - expected))


def euclidean(x, y) -> float:
    """Euclidean distance between two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    return float(np.sqrt(((x - y) ** 2).sum()))


def spectral_angle(x, y) -> float:
    """Spectral angle in radians: arccos of cosine similarity, scale invariant.

    The cosine is clamped to [-1, 1] before arccos to absorb round-off.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    nx = np.sqrt((x * x).sum())
    ny = np.sqrt((y * y).sum())
    if nx == 0.0 or ny == 0.0:
        raise ValueError("spectral angle is undefined for zero vectors")
    cos = float(np.clip((x * y).sum() / (nx * ny), -1.0, 1.0))
    return float(np.arccos(cos))
