import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convertgc.cluster import (
    KMeansResult,
    align_to_predictions,
    ari_score,
    compute_metrics,
    confidence_scores,
    fuse_embeddings,
    hungarian_match,
    kmeans,
    nmi_score,
    select_high_confidence,
    semantic_labels,
)
from convertgc.tensor import make_rng


def brute_best_inertia(X, K):
    """Minimum within-cluster sum of squares over every labeling."""
    n = len(X)
    labelings = np.array(list(itertools.product(range(K), repeat=n)))
    best = np.inf
    for chunk in np.array_split(labelings, max(1, len(labelings) // 20000)):
        total = np.zeros(len(chunk))
        for k in range(K):
            mask = (chunk == k).astype(float)  # (m, n)
            cnt = mask.sum(1)
            s = mask @ X
            ss = mask @ (X * X).sum(1)
            with np.errstate(invalid="ignore", divide="ignore"):
                total += np.where(cnt > 0, ss - (s * s).sum(1) / np.maximum(cnt, 1), 0.0)
        best = min(best, total.min())
    return best


def brute_acc(t, p):
    K = max(t.max(), p.max()) + 1
    return max(np.mean(np.array(perm)[p] == t) for perm in itertools.permutations(range(K)))


def test_fuse_examples(rng):
    E = rng.standard_normal((3, 2))
    assert np.array_equal(fuse_embeddings(E, E), E)
    assert np.array_equal(fuse_embeddings(E, -E), np.zeros_like(E))
    assert fuse_embeddings([[2.0, 0.0]], [[0.0, 2.0]]).tolist() == [[1.0, 1.0]]
    with pytest.raises(ValueError):
        fuse_embeddings(np.ones((2, 2)), np.ones((3, 2)))


def test_kmeans_duplicate_pairs():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    res = kmeans(X, 2, rng=make_rng(0))
    assert res.inertia == 0.0
    assert res.assignments[0] == res.assignments[1] != res.assignments[2] == res.assignments[3]


def test_kmeans_identical_points():
    X = np.ones((5, 3))
    a = kmeans(X, 2, rng=make_rng(0))
    b = kmeans(X, 2, rng=make_rng(1))
    assert a.inertia == 0.0
    assert np.array_equal(a.assignments, np.zeros(5)) and np.array_equal(a.assignments, b.assignments)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kmeans_matches_brute_force(seed):
    rng = make_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    X = np.concatenate([c + 0.7 * rng.standard_normal((3, 2)) for c in centers] + [centers[:1] + 0.7 * rng.standard_normal((1, 2))])
    res = kmeans(X, 3, restarts=10, rng=make_rng(seed))
    assert res.inertia == pytest.approx(brute_best_inertia(X, 3), rel=1e-10)


def test_kmeans_separated_gaussians_recovers_blocks():
    rng = make_rng(3)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    truth = np.repeat(np.arange(3), 10)
    X = centers[truth] + rng.standard_normal((30, 2))
    res = kmeans(X, 3, rng=make_rng(0))
    assert compute_metrics(truth, res.assignments).acc == 1.0


def test_kmeans_invariants(rng):
    X = rng.standard_normal((40, 3))
    res = kmeans(X, 4, restarts=3, rng=make_rng(0))
    d = ((X[:, None, :] - res.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(res.assignments, d.argmin(1))
    assert res.inertia == pytest.approx(d.min(1).sum())
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
    with pytest.raises(ValueError):
        kmeans(X[:2], 3)


def test_kmeans_deterministic(rng):
    X = rng.standard_normal((30, 2))
    a, b = kmeans(X, 3, rng=make_rng(5)), kmeans(X, 3, rng=make_rng(5))
    assert np.array_equal(a.assignments, b.assignments) and a.inertia == b.inertia


def _result(C, X):
    d = ((X[:, None] - C[None]) ** 2).sum(-1)
    return KMeansResult(C, d.argmin(1), float(d.min(1).sum()), 1)


def test_select_high_confidence_counts(rng):
    X = rng.standard_normal((4, 2))
    res = _result(np.array([[0.0, 0.0], [1.0, 1.0]]), X)
    assert len(select_high_confidence(res, X, 1.0)) == 4
    assert len(select_high_confidence(res, X, 0.75)) == 3
    X131 = rng.standard_normal((131, 2))
    assert len(select_high_confidence(_result(np.array([[0.0, 0.0], [1.0, 1.0]]), X131), X131, 0.75)) == 99
    with pytest.raises(ValueError):
        select_high_confidence(res, X, 0.0)


def test_midway_sample_selected_last():
    C = np.array([[-1.0, 0.0], [1.0, 0.0]])
    X = np.array([[0.0, 0.0], [-1.0, 0.1], [1.0, 0.2], [0.9, 0.0]])
    res = _result(C, X)
    conf = confidence_scores(X, C)
    assert conf[0] == 0.0
    hc = select_high_confidence(res, X, 0.75)
    assert 0 not in hc.indices
    assert hc.ranked[-1] != 0 and list(np.sort(hc.ranked)) == list(hc.indices)


def test_single_cluster_confidence():
    X = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(confidence_scores(X, np.zeros((1, 2))), np.ones(3))


@given(st.integers(0, 10**6), st.floats(0.05, 1.0))
@settings(max_examples=50, deadline=None)
def test_selection_separates_confidences(seed, tau):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 2))
    res = _result(rng.standard_normal((3, 2)), X)
    hc = select_high_confidence(res, X, tau)
    conf = confidence_scores(X, res.centroids)
    assert len(hc) == math.ceil(tau * 25 - 1e-9)
    rest = np.setdiff1d(np.arange(25), hc.indices)
    if len(rest):
        assert conf[hc.indices].min() >= conf[rest].max()
    assert np.all(np.diff(conf[hc.ranked]) <= 0)
    assert np.array_equal(hc.labels, res.assignments[hc.indices])


def test_align_to_predictions():
    X = np.array([[0.0], [0.1], [5.0], [5.1]])
    C = np.array([[5.05], [0.05]])
    res = _result(C, X)
    assert res.assignments.tolist() == [1, 1, 0, 0]
    aligned = align_to_predictions(res, np.array([0, 0, 1, 1]))
    assert aligned.assignments.tolist() == [0, 0, 1, 1]
    np.testing.assert_allclose(aligned.centroids, [[0.05], [5.05]])


def test_semantic_labels_examples():
    np.testing.assert_allclose(semantic_labels(np.zeros((2, 4)), 4), 0.25)
    P = semantic_labels(np.array([[20.0, 0.0, 0.0]]), 3)
    assert P[0, 0] > 0.999
    np.testing.assert_allclose(semantic_labels(np.random.default_rng(0).standard_normal((5, 3)), 3).sum(1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        semantic_labels(np.zeros((2, 4)), 3)


def test_hungarian_examples(rng):
    assert hungarian_match(np.diag([5, 3, 2])).tolist() == [0, 1, 2]
    assert hungarian_match(np.fliplr(np.diag([5, 3, 2]))).tolist() == [2, 1, 0]
    for _ in range(20):
        M = rng.integers(0, 20, size=(4, 4))
        perm = hungarian_match(M)
        best = max(sum(M[i, p[i]] for i in range(4)) for p in itertools.permutations(range(4)))
        assert sum(M[i, perm[i]] for i in range(4)) == best


def test_metrics_perfect_under_relabeling():
    t = np.array([0, 0, 1, 1, 2, 2, 2])
    p = np.array([2, 2, 0, 0, 1, 1, 1])
    assert compute_metrics(t, p).as_dict() == {"acc": 1.0, "nmi": 1.0, "ari": 1.0, "f1": 1.0}


def test_metrics_hand_cases():
    m = compute_metrics([0, 0, 1, 1], [0, 1, 0, 1])
    assert abs(m.acc - 0.5) < 1e-10 and abs(m.ari + 0.5) < 1e-10
    m = compute_metrics([0, 0, 1, 1], [0, 0, 0, 0])
    assert abs(m.ari) < 1e-10 and abs(m.nmi) < 1e-10 and m.acc == 0.5


def test_metrics_match_sklearn(rng):
    from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

    for _ in range(30):
        t, p = rng.integers(0, 4, 50), rng.integers(0, 5, 50)
        assert abs(nmi_score(t, p) - normalized_mutual_info_score(t, p)) < 1e-10
        assert abs(ari_score(t, p) - adjusted_rand_score(t, p)) < 1e-10


def test_metrics_errors():
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0])
    with pytest.raises(ValueError):
        compute_metrics([], [])


@pytest.mark.parametrize("seed", range(200))
def test_acc_matches_permutation_brute_force(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 6))
    n = int(rng.integers(1, 61))
    t, p = rng.integers(0, K, n), rng.integers(0, K, n)
    t_c = np.unique(t, return_inverse=True)[1]
    p_c = np.unique(p, return_inverse=True)[1]
    assert abs(compute_metrics(t, p).acc - brute_acc(t_c, p_c)) < 1e-10


@given(st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    t, p = rng.integers(0, 4, 40), rng.integers(0, 4, 40)
    base = compute_metrics(t, p)
    pt, pp = rng.permutation(4), rng.permutation(4)
    other = compute_metrics(pt[t], pp[p])
    for m in ("acc", "nmi", "ari"):
        assert abs(getattr(base, m) - getattr(other, m)) < 1e-10


def test_f1_permutation_invariant_without_ties():
    rng = np.random.default_rng(0)
    t = np.repeat(np.arange(4), 15)
    p = np.where(rng.random(60) < 0.8, t, rng.integers(0, 4, 60))
    base = compute_metrics(t, p).f1
    for _ in range(10):
        pt, pp = rng.permutation(4), rng.permutation(4)
        assert abs(compute_metrics(pt[t], pp[p]).f1 - base) < 1e-12
    assert 0.0 <= base <= 1.0
