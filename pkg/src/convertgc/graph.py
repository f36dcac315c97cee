"""Attributed graphs: IO, smoothing filters, SBM generator and classical augmentations."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .tensor import DTYPE, as_csr, as_dense, make_rng, spmm

AUGMENTATIONS = ("learnable", "feature-mask", "edge-remove", "edge-add", "diffusion")


class DatasetError(ValueError):
    pass


@dataclass
class AttributedGraph:
    X: np.ndarray
    A: sp.csr_array
    labels: np.ndarray | None = None
    n_classes: int | None = None

    def __post_init__(self):
        self.X = as_dense(self.X)
        self.A = as_csr(self.A)
        n = self.X.shape[0]
        if n == 0 or self.X.shape[1] == 0:
            raise DatasetError("graph needs at least one node and one attribute")
        if self.A.shape != (n, n):
            raise DatasetError(f"adjacency shape {self.A.shape} does not match {n} nodes")
        check_adjacency(self.A)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DatasetError("need exactly one label per node")
            if self.labels.min() < 0:
                raise DatasetError("labels must be non-negative")
            if self.n_classes is None:
                self.n_classes = int(self.labels.max()) + 1
            elif self.labels.max() >= self.n_classes:
                raise DatasetError("label index exceeds class count")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_edges(self) -> int:
        return self.A.nnz // 2


def check_adjacency(A: sp.csr_array) -> None:
    """Raise unless ``A`` is symmetric, binary and loop-free."""
    if (A != A.T).nnz:
        raise DatasetError("adjacency is not symmetric")
    if A.nnz and not np.all(A.data == 1.0):
        raise DatasetError("adjacency is not binary")
    if A.diagonal().any():
        raise DatasetError("adjacency has self-loops")


def adjacency_from_edges(edges: np.ndarray, n: int) -> sp.csr_array:
    """Undirected 0/1 adjacency from an (m, 2) edge array; duplicates collapse."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0:
        return sp.csr_array((n, n), dtype=DTYPE)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    A = sp.coo_array((np.ones(len(rows), dtype=DTYPE), (rows, cols)), shape=(n, n)).tocsr()
    A.sort_indices()
    return A


def edge_list(A: sp.csr_array) -> np.ndarray:
    """Upper-triangular (i < j) edges of ``A``, lexicographically sorted."""
    U = sp.triu(A, k=1, format="coo")
    order = np.lexsort((U.col, U.row))
    return np.stack([U.row[order], U.col[order]], axis=1).astype(np.int64)


# --------------------------------------------------------------------------- IO


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln for ln in fh.read().split("\n") if ln.strip()]


def load_dataset(directory) -> AttributedGraph:
    d = Path(directory)
    for name in ("edges.tsv", "features.csv"):
        if not (d / name).is_file():
            raise DatasetError(f"missing {d / name}")

    rows = []
    for lineno, line in enumerate(_read_lines(d / "features.csv"), 1):
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise DatasetError(f"features.csv line {lineno}: {exc}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"ragged feature rows (widths {sorted(widths)})")
    X = np.array(rows, dtype=DTYPE)
    n = X.shape[0]
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature values")

    edges = []
    for lineno, line in enumerate(_read_lines(d / "edges.tsv"), 1):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"edges.tsv line {lineno}: expected two node indices")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetError(f"edges.tsv line {lineno}: non-integer node index") from None
        if i == j:
            raise DatasetError(f"edges.tsv line {lineno}: self-loop {i}")
        if min(i, j) < 0 or max(i, j) >= n:
            raise DatasetError(f"edges.tsv line {lineno}: node index out of range for {n} feature rows")
        edges.append((i, j))
    A = adjacency_from_edges(np.array(edges, dtype=np.int64).reshape(-1, 2), n)

    labels = None
    if (d / "labels.txt").is_file():
        lab_lines = _read_lines(d / "labels.txt")
        try:
            labels = np.array([int(v) for v in lab_lines], dtype=np.int64)
        except ValueError:
            raise DatasetError("labels.txt contains a non-integer label") from None
        if len(labels) != n:
            raise DatasetError(f"labels.txt has {len(labels)} lines, expected {n}")
    return AttributedGraph(X, A, labels)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_dataset(graph: AttributedGraph, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _atomic_write(d / "edges.tsv", "".join(f"{i}\t{j}\n" for i, j in edge_list(graph.A)))
    # repr() gives the shortest round-tripping decimal for a float64
    _atomic_write(d / "features.csv", "".join(",".join(repr(float(v)) for v in row) + "\n" for row in graph.X))
    if graph.labels is not None:
        _atomic_write(d / "labels.txt", "".join(f"{int(v)}\n" for v in graph.labels))
    return d


# ---------------------------------------------------------------------- filters


def normalized_adjacency(A: sp.csr_array) -> sp.csr_array:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    n = A.shape[0]
    A_hat = A + sp.eye_array(n, dtype=DTYPE, format="csr")
    d_inv_sqrt = 1.0 / np.sqrt(np.asarray(A_hat.sum(axis=1)).ravel())
    D = sp.diags_array(d_inv_sqrt)
    out = sp.csr_array(D @ A_hat @ D)
    # exact symmetry regardless of summation order
    out = sp.csr_array((out + out.T) * 0.5)
    out.sort_indices()
    return out


def laplacian_filter(X, A, t: int, propagator=None) -> np.ndarray:
    """Apply (I - L~)^t to X, i.e. ``t`` products with the normalized adjacency.

    ``propagator`` replaces the normalized adjacency (dense or sparse), which is
    how the diffusion ablation plugs a PPR matrix into the same filter.
    """
    if t < 0:
        raise ValueError("filter layers must be non-negative")
    X = as_dense(X)
    if X.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: X has {X.shape[0]} rows, A is {A.shape}")
    P = normalized_adjacency(A) if propagator is None else propagator
    out = X.copy()
    for _ in range(t):
        out = spmm(P, out) if sp.issparse(P) else P @ out
    return out


def ppr_diffusion(A: sp.csr_array, teleport: float) -> np.ndarray:
    """Personalized PageRank matrix alpha (I - (1 - alpha) A~)^-1, dense."""
    if not 0.0 < teleport < 1.0:
        raise ValueError("teleport must lie in (0, 1)")
    n = A.shape[0]
    S = normalized_adjacency(A).toarray()
    M = np.eye(n) - (1.0 - teleport) * S
    return teleport * np.linalg.solve(M, np.eye(n))


# -------------------------------------------------------------------- synthetic


@dataclass
class SbmConfig:
    blocks: int = 4
    nodes_per_block: int = 50
    p_in: float = 0.3
    p_out: float = 0.02
    dim: int = 16
    mean_separation: float = 1.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")
        if self.blocks < 1 or self.nodes_per_block < 1 or self.dim < 1:
            raise ValueError("blocks, nodes_per_block and dim must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


def block_means(cfg: SbmConfig, rng: np.random.Generator) -> np.ndarray:
    """Block-mean vectors: random unit directions scaled to ``mean_separation``."""
    M = rng.standard_normal((cfg.blocks, cfg.dim))
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    return cfg.mean_separation * M


def generate_sbm(cfg: SbmConfig) -> AttributedGraph:
    rng = make_rng(cfg.seed)
    n = cfg.blocks * cfg.nodes_per_block
    labels = np.repeat(np.arange(cfg.blocks), cfg.nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], cfg.p_in, cfg.p_out)
    keep = rng.random(len(iu)) < prob
    A = adjacency_from_edges(np.stack([iu[keep], ju[keep]], axis=1), n)
    means = block_means(cfg, rng)
    X = means[labels] + cfg.noise * rng.standard_normal((n, cfg.dim))
    return AttributedGraph(X, A, labels, cfg.blocks)


# ------------------------------------------------------------- augmentations


@dataclass(frozen=True)
class AugmentationSpec:
    variant: str = "learnable"
    rate: float = 0.1
    teleport: float = 0.1

    def __post_init__(self):
        if self.variant not in AUGMENTATIONS:
            raise ValueError(f"unknown augmentation {self.variant!r}; choose from {AUGMENTATIONS}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("augmentation rate must lie in [0, 1]")
        if not 0.0 < self.teleport < 1.0:
            raise ValueError("teleport must lie in (0, 1)")


def feature_mask(X, rate: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    X = as_dense(X)
    return np.where(rng.random(X.shape) < rate, 0.0, X)


def edge_remove(A: sp.csr_array, rate: float, rng: np.random.Generator) -> sp.csr_array:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    edges = edge_list(A)
    keep = rng.random(len(edges)) >= rate
    return adjacency_from_edges(edges[keep], A.shape[0])


def edge_add(A: sp.csr_array, rate: float, rng: np.random.Generator) -> sp.csr_array:
    """Add floor(rate * |E|) edges drawn uniformly from the current non-edges."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    n = A.shape[0]
    edges = edge_list(A)
    budget = int(np.floor(rate * len(edges)))
    if budget == 0:
        return A.copy()
    n_pairs = n * (n - 1) // 2
    if n_pairs - len(edges) <= 0:
        raise DatasetError("no non-edges available")
    budget = min(budget, n_pairs - len(edges))
    # encode pair (i < j) as i * n + j; rejection sampling is fine at sparse densities
    present = set((edges[:, 0] * n + edges[:, 1]).tolist())
    if n_pairs - len(present) < 4 * budget:
        iu, ju = np.triu_indices(n, k=1)
        codes = iu * n + ju
        free = codes[~np.isin(codes, np.fromiter(present, dtype=np.int64, count=len(present)))]
        chosen = rng.choice(free, size=budget, replace=False)
    else:
        chosen = []
        taken = set(present)
        while len(chosen) < budget:
            i, j = rng.integers(0, n, size=2)
            if i == j:
                continue
            code = int(min(i, j) * n + max(i, j))
            if code not in taken:
                taken.add(code)
                chosen.append(code)
        chosen = np.array(chosen, dtype=np.int64)
    new = np.stack([chosen // n, chosen % n], axis=1)
    return adjacency_from_edges(np.concatenate([edges, new]), n)


def connected_components(A: sp.csr_array) -> int:
    from scipy.sparse.csgraph import connected_components as _cc

    return int(_cc(A, directed=False)[0])


__all__ = [
    "AUGMENTATIONS",
    "AttributedGraph",
    "AugmentationSpec",
    "DatasetError",
    "SbmConfig",
    "adjacency_from_edges",
    "block_means",
    "check_adjacency",
    "connected_components",
    "edge_add",
    "edge_list",
    "edge_remove",
    "feature_mask",
    "generate_sbm",
    "laplacian_filter",
    "load_dataset",
    "normalized_adjacency",
    "ppr_diffusion",
    "save_dataset",
]
