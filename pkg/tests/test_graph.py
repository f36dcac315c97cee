import numpy as np
import pytest
import scipy.sparse as sp

from convertgc.graph import (
    AttributedGraph,
    AugmentationSpec,
    DatasetError,
    SbmConfig,
    adjacency_from_edges,
    check_adjacency,
    connected_components,
    edge_add,
    edge_list,
    edge_remove,
    feature_mask,
    generate_sbm,
    laplacian_filter,
    load_dataset,
    normalized_adjacency,
    ppr_diffusion,
    save_dataset,
)
from convertgc.tensor import make_rng


def write(d, edges, features, labels=None):
    d.mkdir(parents=True, exist_ok=True)
    (d / "edges.tsv").write_text(edges)
    (d / "features.csv").write_text(features)
    if labels is not None:
        (d / "labels.txt").write_text(labels)
    return d


def random_graph(rng, n, p):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return adjacency_from_edges(np.stack([iu[keep], ju[keep]], 1), n)


def path_graph(n):
    return adjacency_from_edges(np.array([(i, i + 1) for i in range(n - 1)]), n)


# ---------------------------------------------------------------- loading


def test_load_minimal(tmp_path):
    g = load_dataset(write(tmp_path / "d", "0 1\n", "1.0,2.0\n3.0,4.0\n", "0\n1\n"))
    assert g.n == 2 and g.n_edges == 1 and g.n_classes == 2
    assert g.A.toarray().tolist() == [[0, 1], [1, 0]]


def test_load_dedups_reversed_edges(tmp_path):
    g = load_dataset(write(tmp_path / "d", "0 1\n1 0\n0\t1\n", "1\n2\n"))
    assert g.n_edges == 1
    assert g.labels is None and g.n_classes is None


@pytest.mark.parametrize(
    "edges,features,labels",
    [
        ("0 2\n", "1\n2\n", None),  # node index past the feature rows
        ("0 0\n", "1\n2\n", None),  # self-loop
        ("0 1\n", "1,2\n3\n", None),  # ragged rows
        ("0 1\n", "1\n2\n", "0\nx\n"),  # non-integer label
        ("0 1\n", "1\n2\n", "0\n"),  # too few labels
        ("0 a\n", "1\n2\n", None),
    ],
)
def test_load_rejects_bad_files(tmp_path, edges, features, labels):
    with pytest.raises(DatasetError):
        load_dataset(write(tmp_path / "d", edges, features, labels))


def test_load_missing_file(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "features.csv").write_text("1\n")
    with pytest.raises(DatasetError, match="edges.tsv"):
        load_dataset(tmp_path / "d")


def test_round_trip_bit_exact(tmp_path):
    g = generate_sbm(SbmConfig(3, 5, 0.7, 0.1, 4, 1.0, 0.3, seed=3))
    save_dataset(g, tmp_path / "a")
    h = load_dataset(tmp_path / "a")
    assert np.array_equal(g.X, h.X)
    assert (g.A != h.A).nnz == 0
    assert np.array_equal(g.labels, h.labels)
    save_dataset(h, tmp_path / "b")
    for name in ("edges.tsv", "features.csv", "labels.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_graph_invariants_enforced():
    with pytest.raises(DatasetError):
        AttributedGraph(np.ones((2, 1)), sp.csr_array(np.array([[0.0, 1.0], [0.0, 0.0]])))
    with pytest.raises(DatasetError):
        AttributedGraph(np.ones((2, 1)), sp.csr_array(np.eye(2)))
    with pytest.raises(DatasetError):
        AttributedGraph(np.ones((2, 1)), sp.csr_array((2, 2)), labels=[0, 3], n_classes=2)


# ---------------------------------------------------------------- filters


def test_normalized_adjacency_examples():
    assert normalized_adjacency(sp.csr_array((1, 1))).toarray().tolist() == [[1.0]]
    np.testing.assert_allclose(normalized_adjacency(path_graph(2)).toarray(), [[0.5, 0.5], [0.5, 0.5]])


def test_normalized_adjacency_symmetric_and_spectrum(rng):
    for n in (3, 8, 20):
        S = normalized_adjacency(random_graph(rng, n, 0.3))
        assert (S != S.T).nnz == 0
        w = np.linalg.eigvalsh(S.toarray())
        assert w.min() > -1.0 and w.max() <= 1.0 + 1e-12
        assert np.isclose(w.max(), 1.0)


def test_filter_examples():
    X = np.arange(6.0).reshape(3, 2)
    A = path_graph(3)
    assert np.array_equal(laplacian_filter(X, A, 0), X)
    np.testing.assert_allclose(laplacian_filter(np.eye(2), path_graph(2), 1), [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        laplacian_filter(np.ones((2, 2)), A, 1)


def test_filter_converges_to_sqrt_degree():
    A = adjacency_from_edges(np.array([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]), 6)
    X = make_rng(0).standard_normal((6, 3))
    Y = laplacian_filter(X, A, 50)
    s = np.sqrt(np.asarray(A.sum(axis=1)).ravel() + 1.0)
    for col in Y.T:
        ratio = col / s
        np.testing.assert_allclose(ratio, ratio.mean(), atol=1e-3)


def test_filter_composes(rng):
    A = random_graph(rng, 12, 0.3)
    X = rng.standard_normal((12, 4))
    np.testing.assert_allclose(laplacian_filter(X, A, 5), laplacian_filter(laplacian_filter(X, A, 2), A, 3), atol=1e-10)


def test_ppr_examples():
    np.testing.assert_allclose(ppr_diffusion(sp.csr_array((1, 1)), 0.3), [[1.0]], rtol=1e-14)
    np.testing.assert_allclose(ppr_diffusion(path_graph(4), 0.999), np.eye(4), atol=1e-2)
    # oracle: inverse of the dense system built by hand
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    A_hat = A + np.eye(3)
    d = A_hat.sum(1)
    S = A_hat / np.sqrt(np.outer(d, d))
    expected = 0.1 * np.linalg.inv(np.eye(3) - 0.9 * S)
    np.testing.assert_allclose(ppr_diffusion(path_graph(3), 0.1), expected, atol=1e-9)
    with pytest.raises(ValueError):
        ppr_diffusion(path_graph(3), 1.0)


# ---------------------------------------------------------------- synthetic


def test_sbm_cliques():
    g = generate_sbm(SbmConfig(2, 3, 1.0, 0.0, 2, 1.0, 0.0, seed=1))
    assert g.n_edges == 6
    assert connected_components(g.A) == 2
    dense = g.A.toarray()
    assert dense[:3, :3].sum() == 6 and dense[:3, 3:].sum() == 0


def test_sbm_noise_free_features_are_block_means():
    g = generate_sbm(SbmConfig(3, 4, 0.5, 0.1, 5, 2.0, 0.0, seed=1))
    for b in range(3):
        rows = g.X[g.labels == b]
        assert np.all(rows == rows[0])
        np.testing.assert_allclose(np.linalg.norm(rows[0]), 2.0)


def test_sbm_deterministic():
    c = SbmConfig(3, 6, 0.5, 0.1, 4, 1.0, 1.0, seed=9)
    g, h = generate_sbm(c), generate_sbm(c)
    assert np.array_equal(g.X, h.X) and (g.A != h.A).nnz == 0


def test_sbm_config_validation():
    with pytest.raises(ValueError):
        SbmConfig(p_in=0.1, p_out=0.2)


# ---------------------------------------------------------------- augmentations


def test_feature_mask_extremes(rng):
    X = rng.standard_normal((5, 4))
    assert np.array_equal(feature_mask(X, 0.0, make_rng(0)), X)
    assert np.array_equal(feature_mask(X, 1.0, make_rng(0)), np.zeros_like(X))


def test_feature_mask_rate():
    # P(|Binom(1e4, 0.1)/1e4 - 0.1| > 0.03) is ~1e-23 (Chernoff), so this is deterministic in practice
    X = np.ones((100, 100))
    for seed in range(20):
        frac = np.mean(feature_mask(X, 0.1, make_rng(seed)) == 0)
        assert 0.07 <= frac <= 0.13


def test_edge_remove_extremes(rng):
    A = random_graph(rng, 15, 0.3)
    assert np.array_equal(edge_list(edge_remove(A, 0.0, make_rng(0))), edge_list(A))
    assert edge_remove(A, 1.0, make_rng(0)).nnz == 0
    B = edge_remove(A, 0.5, make_rng(0))
    check_adjacency(B)
    assert set(map(tuple, edge_list(B))) <= set(map(tuple, edge_list(A)))


def test_edge_add_budget(rng):
    A = path_graph(11)  # 10 edges
    B = edge_add(A, 0.1, make_rng(0))
    check_adjacency(B)
    assert B.nnz // 2 == 11
    assert set(map(tuple, edge_list(A))) <= set(map(tuple, edge_list(B)))


def test_edge_add_dense_fallback():
    # nearly complete graph exercises the enumerate-the-complement branch
    n = 6
    iu, ju = np.triu_indices(n, 1)
    A = adjacency_from_edges(np.stack([iu, ju], 1)[:-2], n)
    B = edge_add(A, 0.1, make_rng(0))
    assert B.nnz // 2 == A.nnz // 2 + 1
    check_adjacency(B)


def test_edge_add_complete_graph_errors():
    iu, ju = np.triu_indices(4, 1)
    A = adjacency_from_edges(np.stack([iu, ju], 1), 4)
    with pytest.raises(DatasetError, match="no non-edges"):
        edge_add(A, 0.5, make_rng(0))


def test_augmentations_preserve_invariants(rng):
    A = random_graph(rng, 30, 0.2)
    for seed in range(5):
        for B in (edge_remove(A, 0.3, make_rng(seed)), edge_add(A, 0.3, make_rng(seed))):
            check_adjacency(B)


def test_augmentation_spec_validation():
    AugmentationSpec("diffusion", teleport=0.1)
    with pytest.raises(ValueError):
        AugmentationSpec("dropout")
    with pytest.raises(ValueError):
        AugmentationSpec("feature-mask", rate=1.5)
    with pytest.raises(ValueError):
        AugmentationSpec("diffusion", teleport=0.0)
