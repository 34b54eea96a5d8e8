import numpy as np
import pytest

from hsiseg import clustering, metrics


def naive_ahc(values, linkage, target_k):
    """O(n^3) reference: recompute every inter-cluster distance from leaf
    pairs at every step; ties take the smallest (id_a, id_b) pair."""
    n = values.shape[0]
    clusters = {i: [i] for i in range(n)}
    merges = []
    next_id = n
    while len(clusters) > target_k:
        best = None
        ids = sorted(clusters)
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                a, b = ids[ai], ids[bi]
                cross = [
                    values[p, q] for p in clusters[a] for q in clusters[b]
                ]
                d = max(cross) if linkage == "complete" else sum(cross) / len(cross)
                key = (d, a, b)
                if best is None or key < best:
                    best = key
        d, a, b = best
        merges.append((a, b, a_leaves := clusters.pop(a), clusters.pop(b)))
        clusters[next_id] = a_leaves + merges[-1][3]
        merges[-1] = (a, b, d, next_id)
        next_id += 1
    labels = np.empty(n, dtype=np.int64)
    for idx, cid in enumerate(sorted(clusters)):
        for leaf in clusters[cid]:
            labels[leaf] = idx
    return labels, merges


def random_distances(rng, n, discrete=False):
    if discrete:
        # small integer distances force exact ties
        tri = rng.integers(1, 4, size=(n, n)).astype(float)
    else:
        tri = rng.random((n, n))
    values = np.triu(tri, k=1)
    values = values + values.T
    return values


@pytest.mark.parametrize("linkage", ["complete", "average"])
def test_ahc_matches_naive_reference(linkage):
    rng = np.random.default_rng(17)
    for case in range(100):
        values = random_distances(rng, 20)
        target_k = int(rng.integers(1, 8))
        dist = clustering.DistanceMatrix(values)
        labels, dendrogram = clustering.ahc(dist, linkage, target_k)
        ref_labels, ref_merges = naive_ahc(values, linkage, target_k)
        assert np.array_equal(labels, ref_labels), f"case {case}"
        assert len(dendrogram.merges) == len(ref_merges)
        for got, want in zip(dendrogram.merges, ref_merges):
            assert got[0] == want[0] and got[1] == want[1] and got[3] == want[3]
            assert got[2] == pytest.approx(want[2], rel=1e-9)


def test_ahc_exact_tie_breaks_complete_linkage():
    # discrete distances create real ties; complete linkage involves no
    # arithmetic, so the whole merge record must match exactly
    rng = np.random.default_rng(5)
    for case in range(40):
        values = random_distances(rng, 12, discrete=True)
        dist = clustering.DistanceMatrix(values)
        labels, dendrogram = clustering.ahc(dist, "complete", 2)
        ref_labels, ref_merges = naive_ahc(values, "complete", 2)
        assert np.array_equal(labels, ref_labels), f"case {case}"
        assert [m for m in dendrogram.merges] == [tuple(m) for m in ref_merges]


def test_ahc_all_equal_distances_merge_order():
    # with every distance tied, merges must walk the smallest id pairs:
    # (0,1), then (2,3), then (4,5), then the composites in creation order
    values = np.ones((6, 6)) - np.eye(6)
    dist = clustering.DistanceMatrix(values)
    _, dendrogram = clustering.ahc(dist, "average", 1)
    assert [(m[0], m[1]) for m in dendrogram.merges] == [
        (0, 1),
        (2, 3),
        (4, 5),
        (6, 7),
        (8, 9),
    ]


def test_ahc_validation():
    dist = clustering.DistanceMatrix(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        clustering.ahc(dist, "single", 1)
    with pytest.raises(ValueError):
        clustering.ahc(dist, "complete", 0)
    with pytest.raises(ValueError):
        clustering.ahc(dist, "complete", 4)


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        clustering.DistanceMatrix(np.zeros(3))
    with pytest.raises(ValueError):
        clustering.DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        clustering.DistanceMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(ValueError):
        clustering.DistanceMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))


def test_pairwise_distances_metric_axioms(rng):
    data = rng.random((8, 5)) + 0.1
    for metric in clustering.DISTANCE_METRICS:
        dist = clustering.pairwise_distances(data, metric)
        assert dist.n == 8
        assert (np.diag(dist.values) == 0).all()
        assert (dist.values >= 0).all()
        assert np.array_equal(dist.values, dist.values.T)
    with pytest.raises(ValueError):
        clustering.pairwise_distances(data, "manhattan")


def test_pairwise_hamming_counts_bits():
    rows = np.array([[0, 0, 1], [1, 0, 1], [1, 1, 0]])
    dist = clustering.pairwise_distances(rows, "hamming")
    assert dist.values[0, 1] == 1.0
    assert dist.values[0, 2] == 3.0
    assert dist.values[1, 2] == 2.0


def test_kmeans_recovers_separated_blobs(rng):
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    data = np.vstack([c + 0.1 * rng.standard_normal((30, 2)) for c in centers])
    truth = np.repeat([0, 1, 2], 30)
    model, labels = clustering.kmeans(data, 3, seed=0)
    assert model.k == 3
    table = metrics.contingency(truth, labels)
    assert metrics.adjusted_rand(table) == 1.0
    assert model.inertia == pytest.approx(
        sum(
            ((data[labels == c] - model.centroids[c]) ** 2).sum()
            for c in range(3)
        )
    )


def test_kmeans_determinism_and_validation(rng):
    data = rng.random((20, 3))
    _, a = clustering.kmeans(data, 4, seed=11)
    _, b = clustering.kmeans(data, 4, seed=11)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        clustering.kmeans(data, 0, seed=0)
    with pytest.raises(ValueError):
        clustering.kmeans(data, 21, seed=0)
    with pytest.raises(ValueError):
        clustering.kmeans(np.zeros((0, 3)), 1, seed=0)


def test_kmeans_k_equals_n_and_duplicate_points():
    data = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    model, labels = clustering.kmeans(data, 4, seed=3)
    # k == n with duplicates: empty-cluster re-seeding still yields k groups
    assert model.k == 4
    assert len(set(labels.tolist())) == 4
    assert model.inertia == pytest.approx(0.0)


def test_kmeans_degenerate_duplicates_fill_every_cluster():
    # all points coincide: re-seeding must still leave no cluster empty and
    # no centroid non-finite
    import warnings

    for data, k, seed in [
        (np.zeros((6, 2)), 3, 0),
        (np.array([[0.0, 1.0]] * 4 + [[1.0, 0.0]] * 4), 3, 1),
        (np.ones((4, 3)), 4, 2),
    ]:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            model, labels = clustering.kmeans(data, k, seed=seed)
        assert np.isfinite(model.centroids).all()
        assert len(set(labels.tolist())) == k


def test_kmeans_single_cluster(rng):
    data = rng.random((10, 2))
    model, labels = clustering.kmeans(data, 1, seed=0)
    assert (labels == 0).all()
    assert model.centroids[0] == pytest.approx(data.mean(axis=0))


def test_kmeans_repeated_summary(rng):
    data = np.vstack(
        [rng.standard_normal((20, 2)), 50.0 + rng.standard_normal((20, 2))]
    )
    truth = np.repeat([1, 2], 20)
    rows, summary = clustering.kmeans_repeated(data, truth, 2, seeds=range(5))
    assert len(rows) == 5
    for name in ("homogeneity", "completeness", "v_measure", "rand_score", "adjusted_rand"):
        mean, std = summary[name]
        assert mean == pytest.approx(1.0)
        assert std == pytest.approx(0.0)
    with pytest.raises(ValueError):
        clustering.kmeans_repeated(data, truth, 2, seeds=[])


def test_rbm_cluster_distance_modes(rng):
    pixel_labels = np.array([[0, 1], [0, 1], [1, 0], [1, 1]])
    pixels = np.array([[1.0, 0.0], [1.0, 0.2], [0.0, 1.0], [2.0, 2.0]])
    dist, label_map = clustering.rbm_cluster_distance(pixel_labels, None)
    assert dist.n == 3
    assert set(label_map) == {(0, 1), (1, 0), (1, 1)}
    assert dist.values[label_map[(0, 1)], label_map[(1, 0)]] == 2.0

    dist_sad, _ = clustering.rbm_cluster_distance(
        pixel_labels, pixels, mode="centroid_sad"
    )
    # centroid of (0,1) rows is (1.0, 0.1); angle to (0,1) centroid near pi/2
    expected = metrics.spectral_angle([1.0, 0.1], [0.0, 1.0])
    assert dist_sad.values[label_map[(0, 1)], label_map[(1, 0)]] == pytest.approx(expected)

    with pytest.raises(ValueError):
        clustering.rbm_cluster_distance(pixel_labels, None, mode="centroid_sad")
    with pytest.raises(ValueError):
        clustering.rbm_cluster_distance(pixel_labels, pixels[:2], mode="centroid_sad")
    with pytest.raises(ValueError):
        clustering.rbm_cluster_distance(np.array([[0, 1], [0, 1]]), None)
    with pytest.raises(ValueError):
        clustering.rbm_cluster_distance(pixel_labels, None, mode="cosine")


def test_merge_rbm_clusters_end_to_end(rng):
    # 5 distinct binary labels on 12 pixels merged down to 2 groups
    base = np.array(
        [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1], [1, 1, 0]]
    )
    pixel_labels = base[rng.integers(0, 5, 12)]
    dist, label_map = clustering.rbm_cluster_distance(pixel_labels, None)
    final, dendrogram = clustering.merge_rbm_clusters(
        pixel_labels, dist, label_map, linkage="average", target_k=2
    )
    assert final.shape == (12,)
    assert len(set(final.tolist())) == 2
    # pixels sharing a binary label always share a final cluster
    ids = {}
    for row, lab in zip(map(tuple, pixel_labels), final):
        assert ids.setdefault(row, lab) == lab


def test_merge_rbm_clusters_identity_when_few_labels():
    pixel_labels = np.array([[0, 1], [1, 0], [0, 1]])
    dist, label_map = clustering.rbm_cluster_distance(pixel_labels, None)
    final, dendrogram = clustering.merge_rbm_clusters(
        pixel_labels, dist, label_map, target_k=7
    )
    assert dendrogram.merges == ()
    assert final[0] == final[2] != final[1]
