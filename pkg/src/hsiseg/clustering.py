"""k-means baseline and agglomerative hierarchical clustering.

AHC runs on an explicit distance matrix with complete or average linkage,
both maintained through Lance-Williams updates. The RBM-specific helpers
turn distinct binary pixel labels into clusters, build a distance matrix
over them, and merge them down to a target cluster count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics

__all__ = [
    "DistanceMatrix",
    "Dendrogram",
    "KMeansModel",
    "kmeans",
    "kmeans_repeated",
    "pairwise_distances",
    "ahc",
    "rbm_cluster_distance",
    "merge_rbm_clusters",
]

LINKAGES = ("complete", "average")
DISTANCE_METRICS = ("euclidean", "spectral_angle", "hamming")
RBM_DISTANCE_MODES = ("hamming_labels", "centroid_euclidean", "centroid_sad")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12):
            raise ValueError("distance matrix must be symmetric")
        if (v < 0).any():
            raise ValueError("distances must be non-negative")
        if np.abs(np.diag(v)).max(initial=0.0) != 0.0:
            raise ValueError("diagonal must be zero")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "distance"])
            for i in range(self.n):
                for j in range(i + 1, self.n):
                    writer.writerow([i, j, repr(float(self.values[i, j]))])


@dataclass(frozen=True)
class Dendrogram:
    """Merge list (id_a, id_b, distance, new_id); leaves are 0..n_leaves-1."""

    n_leaves: int
    merges: Tuple[Tuple[int, int, float, int], ...]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "a", "b", "distance", "new_id"])
            for step, (a, b, dist, new_id) in enumerate(self.merges):
                writer.writerow([step, a, b, repr(float(dist)), new_id])


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia: float

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if self.k < 1 or c.shape[0] != self.k:
            raise ValueError("need k >= 1 centroids")
        if not np.isfinite(c).all():
            raise ValueError("centroids must be finite")
        object.__setattr__(self, "centroids", c)


def _sq_dists_to(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = data[:, None, :] - centroids[None, :, :]
    return np.einsum("nkb,nkb->nk", diff, diff)


def _kmeanspp_init(
    data: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = data[first]
    closest = ((data - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining mass sits on chosen points; fall back to uniform
            pick = int(rng.integers(0, n))
        else:
            r = rng.random() * total
            pick = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            pick = min(pick, n - 1)
        centroids[c] = data[pick]
        closest = np.minimum(closest, ((data - centroids[c]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    data: np.ndarray, k: int, seed: int, max_iters: int = 300
) -> Tuple[KMeansModel, np.ndarray]:
    """Lloyd's algorithm from a k-means++ start; stops at assignment fixpoint.

    Ties in assignment go to the lowest centroid index. An empty cluster is
    re-seeded at the worst-fit point whose own cluster keeps at least one
    member (lowest point index on ties), one empty cluster at a time, so no
    cluster is left empty at the centroid update.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty data")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(data, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iters):
        sq = _sq_dists_to(data, centroids)
        new_labels = sq.argmin(axis=1)
        point_sq = sq[np.arange(n), new_labels]
        for cluster in range(k):
            if (new_labels == cluster).any():
                continue
            # only points from clusters with >= 2 members may move; with an
            # empty cluster present, pigeonhole guarantees such a donor
            counts = np.bincount(new_labels, minlength=k)
            movable = np.where(counts[new_labels] > 1)[0]
            worst = int(movable[point_sq[movable].argmax()])
            new_labels[worst] = cluster
        if (new_labels == labels).all():
            break
        labels = new_labels
        for cluster in range(k):
            centroids[cluster] = data[labels == cluster].mean(axis=0)
    sq = _sq_dists_to(data, centroids)
    inertia = float(sq[np.arange(n), labels].sum())
    return KMeansModel(k=k, centroids=centroids, inertia=inertia), labels


def kmeans_repeated(
    data: np.ndarray,
    truth: np.ndarray,
    k: int,
    seeds: Sequence[int],
    max_iters: int = 300,
) -> Tuple[List[Dict[str, float]], Dict[str, Tuple[float, float]]]:
    """Run kmeans once per seed and score each run against the ground truth.

    Returns per-seed metric rows and {metric: (mean, population std)}.
    """
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    truth = np.asarray(truth)
    rows: List[Dict[str, float]] = []
    for seed in seeds:
        _, labels = kmeans(data, k, int(seed), max_iters=max_iters)
        table = metrics.contingency(truth, labels)
        h = metrics.homogeneity(table)
        c = metrics.completeness(table)
        rows.append(
            {
                "seed": float(seed),
                "homogeneity": h,
                "completeness": c,
                "v_measure": metrics.v_measure(h, c),
                "rand_score": metrics.rand_score(table),
                "adjusted_rand": metrics.adjusted_rand(table),
            }
        )
    summary: Dict[str, Tuple[float, float]] = {}
    for name in ("homogeneity", "completeness", "v_measure", "rand_score", "adjusted_rand"):
        values = np.array([row[name] for row in rows])
        summary[name] = (float(values.mean()), float(values.std()))
    return rows, summary


def _row_distance(x: np.ndarray, y: np.ndarray, metric: str) -> float:
    if metric == "euclidean":
        return metrics.euclidean(x, y)
    if metric == "spectral_angle":
        return metrics.spectral_angle(x, y)
    if metric == "hamming":
        return float((x != y).sum())
    raise ValueError(f"unknown distance metric {metric!r}")


def pairwise_distances(data: np.ndarray, metric: str) -> DistanceMatrix:
    """Symmetric distance matrix over rows of data under the named metric."""
    if metric not in DISTANCE_METRICS:
        raise ValueError(f"unknown distance metric {metric!r}")
    data = np.atleast_2d(np.asarray(data))
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty data")
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = _row_distance(data[i], data[j], metric)
            values[i, j] = d
            values[j, i] = d
    return DistanceMatrix(values)


def _min_pair(
    dist: np.ndarray, ids: List[int]
) -> Tuple[int, int]:
    """Positions of the closest active pair; ties take the smallest id pair."""
    m = dist.shape[0]
    upper = np.triu_indices(m, k=1)
    flat = dist[upper]
    dmin = flat.min()
    best_pos: Optional[Tuple[int, int]] = None
    best_ids: Optional[Tuple[int, int]] = None
    for k in np.nonzero(flat == dmin)[0]:
        p, q = int(upper[0][k]), int(upper[1][k])
        pair = tuple(sorted((ids[p], ids[q])))
        if best_ids is None or pair < best_ids:
            best_ids = pair
            best_pos = (p, q)
    return best_pos


def ahc(
    dist: DistanceMatrix, linkage: str, target_k: int
) -> Tuple[np.ndarray, Dendrogram]:
    """Agglomerate until target_k clusters remain.

    complete: inter-cluster distance is the max pairwise leaf distance;
    average: the unweighted mean pairwise leaf distance. Both follow from
    Lance-Williams updates of the active matrix. Returned labels number the
    surviving clusters 0..target_k-1 in ascending cluster-id order.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    n = dist.n
    if not 1 <= target_k <= n:
        raise ValueError(f"need 1 <= target_k <= {n}, got {target_k}")
    matrix = dist.values.copy()
    ids: List[int] = list(range(n))
    sizes: Dict[int, int] = {i: 1 for i in range(n)}
    parent: Dict[int, int] = {}
    merges: List[Tuple[int, int, float, int]] = []
    while len(ids) > target_k:
        p, q = _min_pair(matrix, ids)
        id_a, id_b = sorted((ids[p], ids[q]))
        d = float(matrix[p, q])
        new_id = n + len(merges)
        merges.append((id_a, id_b, d, new_id))
        parent[id_a] = new_id
        parent[id_b] = new_id
        size_p, size_q = sizes[ids[p]], sizes[ids[q]]
        keep = [r for r in range(len(ids)) if r not in (p, q)]
        if linkage == "complete":
            new_row = np.maximum(matrix[p, keep], matrix[q, keep])
        else:
            new_row = (size_p * matrix[p, keep] + size_q * matrix[q, keep]) / (
                size_p + size_q
            )
        matrix = matrix[np.ix_(keep, keep)]
        matrix = np.pad(matrix, ((0, 1), (0, 1)))
        matrix[-1, :-1] = new_row
        matrix[:-1, -1] = new_row
        sizes[new_id] = size_p + size_q
        ids = [ids[r] for r in keep] + [new_id]
    final_ids = sorted(ids)
    index_of = {cid: idx for idx, cid in enumerate(final_ids)}
    labels = np.empty(n, dtype=np.int64)
    for leaf in range(n):
        root = leaf
        while root in parent:
            root = parent[root]
        labels[leaf] = index_of[root]
    return labels, Dendrogram(n_leaves=n, merges=tuple(merges))


def rbm_cluster_distance(
    pixel_labels: np.ndarray,
    pixels: Optional[np.ndarray],
    mode: str = "hamming_labels",
) -> Tuple[DistanceMatrix, Dict[Tuple[int, ...], int]]:
    """Distance matrix over the distinct binary labels present in pixel_labels.

    hamming_labels measures bit disagreement between the label vectors
    themselves; the centroid modes measure euclidean or spectral-angle
    distance between mean spectra of each label's member pixels (pixels
    required, aligned row-for-row with pixel_labels).
    """
    if mode not in RBM_DISTANCE_MODES:
        raise ValueError(f"unknown distance mode {mode!r}")
    pixel_labels = np.atleast_2d(np.asarray(pixel_labels))
    unique, inverse = np.unique(pixel_labels, axis=0, return_inverse=True)
    if unique.shape[0] < 2:
        raise ValueError("need at least 2 distinct labels to build distances")
    if mode == "hamming_labels":
        dist = pairwise_distances(unique, "hamming")
    else:
        if pixels is None:
            raise ValueError(f"mode {mode!r} requires pixel spectra")
        pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        if pixels.shape[0] != pixel_labels.shape[0]:
            raise ValueError("pixels and pixel_labels must align row-for-row")
        centroids = np.stack(
            [pixels[inverse == c].mean(axis=0) for c in range(unique.shape[0])]
        )
        metric = "euclidean" if mode == "centroid_euclidean" else "spectral_angle"
        dist = pairwise_distances(centroids, metric)
    label_map = {tuple(int(b) for b in row): idx for idx, row in enumerate(unique)}
    return dist, label_map


def merge_rbm_clusters(
    pixel_labels: np.ndarray,
    dist: DistanceMatrix,
    label_map: Dict[Tuple[int, ...], int],
    linkage: str = "complete",
    target_k: int = 7,
) -> Tuple[np.ndarray, Dendrogram]:
    """AHC-merge distinct RBM labels down to at most target_k final labels.

    Every pixel inherits the AHC cluster of its RBM label. When the distinct
    labels already number at most target_k, the mapping is the identity.
    """
    pixel_labels = np.atleast_2d(np.asarray(pixel_labels))
    cluster_index = np.array(
        [label_map[tuple(int(b) for b in row)] for row in pixel_labels],
        dtype=np.int64,
    )
    if dist.n <= target_k:
        return cluster_index, Dendrogram(n_leaves=dist.n, merges=())
    ahc_labels, dendrogram = ahc(dist, linkage, target_k)
    return ahc_labels[cluster_index], dendrogram
