"""Embedding fusion, K-means, pseudo-label selection and clustering metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .tensor import as_dense, row_softmax


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)


@dataclass
class HighConfidenceSet:
    indices: np.ndarray  # ascending sample ids
    labels: np.ndarray  # pseudo label per entry of ``indices``
    confidences: np.ndarray  # score per entry of ``indices``
    ranked: np.ndarray  # the same ids in selection order
    tau: float

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    nmi: float
    ari: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return {"acc": self.acc, "nmi": self.nmi, "ari": self.ari, "f1": self.f1}


def fuse_embeddings(E1, E2) -> np.ndarray:
    E1, E2 = as_dense(E1), as_dense(E2)
    if E1.shape != E2.shape:
        raise ValueError(f"shape mismatch: {E1.shape} vs {E2.shape}")
    return 0.5 * (E1 + E2)


# ---------------------------------------------------------------------- K-means


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = sq_distances(X, X[centers]).ravel()
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(idx)
        closest = np.minimum(closest, sq_distances(X, X[idx : idx + 1]).ravel())
    return X[centers].copy()


def _lloyd(X: np.ndarray, C: np.ndarray, max_iter: int, tol: float) -> KMeansResult:
    K = C.shape[0]
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = sq_distances(X, C)
        assign = d.argmin(axis=1)  # argmin returns the lowest id on ties
        own = d[np.arange(len(X)), assign]
        history.append(float(own.sum()))
        counts = np.bincount(assign, minlength=K)
        newC = np.zeros_like(C)
        np.add.at(newC, assign, X)
        nonempty = counts > 0
        newC[nonempty] /= counts[nonempty, None]
        for k in np.flatnonzero(~nonempty):
            far = int(own.argmax())
            newC[k] = X[far]
            own[far] = -1.0
        shift = float(np.sqrt(((newC - C) ** 2).sum(axis=1)).max())
        C = newC
        if shift < tol:
            break
    d = sq_distances(X, C)
    assign = d.argmin(axis=1)
    inertia = float(d[np.arange(len(X)), assign].sum())
    history.append(inertia)
    return KMeansResult(C, assign, inertia, it, history)


def kmeans(E, K: int, restarts: int = 10, max_iter: int = 300, tol: float = 1e-6, rng=None) -> KMeansResult:
    """Best-of-``restarts`` Lloyd K-means with K-means++ seeding."""
    X = as_dense(E)
    if not 1 <= K <= X.shape[0]:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={X.shape[0]}")
    rng = rng if rng is not None else np.random.default_rng(0)
    best = None
    for _ in range(max(1, restarts)):
        res = _lloyd(X, kmeans_plusplus(X, K, rng), max_iter, tol)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def confidence_scores(E, centroids) -> np.ndarray:
    """Margin 1 - d1/d2 between nearest and second-nearest centroid distances."""
    X = as_dense(E)
    C = as_dense(centroids)
    if C.shape[0] == 1:
        return np.ones(X.shape[0])
    d = np.sqrt(sq_distances(X, C))
    d.sort(axis=1)
    d1, d2 = d[:, 0], d[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        conf = np.where(d2 > 0, 1.0 - d1 / d2, 0.0)
    return np.clip(conf, 0.0, 1.0)


def select_count(tau: float, n: int) -> int:
    # small slack so that e.g. 0.55 * 100 selects 55, not 56
    return min(n, max(1, math.ceil(tau * n - 1e-9)))


def select_high_confidence(res: KMeansResult, E, tau: float) -> HighConfidenceSet:
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    conf = confidence_scores(E, res.centroids)
    n = len(conf)
    m = select_count(tau, n)
    order = np.lexsort((np.arange(n), -conf))[:m]
    idx = np.sort(order)
    return HighConfidenceSet(idx, res.assignments[idx].copy(), conf[idx], order, tau)


def align_to_predictions(res: KMeansResult, predicted) -> KMeansResult:
    """Renumber clusters to agree as much as possible with ``predicted`` ids.

    K-means returns arbitrary cluster ids; cross-entropy against per-column
    semantic labels needs ids that correspond to columns.
    """
    K = res.centroids.shape[0]
    M = np.zeros((K, K), dtype=np.int64)
    np.add.at(M, (res.assignments, np.asarray(predicted)), 1)
    perm = hungarian_match(M)
    C = np.empty_like(res.centroids)
    C[perm] = res.centroids
    return KMeansResult(C, perm[res.assignments], res.inertia, res.iterations, res.history)


def semantic_labels(E_view, K: int) -> np.ndarray:
    E_view = as_dense(E_view)
    if E_view.shape[1] != K:
        raise ValueError(f"semantic labels need {K} columns, got {E_view.shape[1]}")
    return row_softmax(E_view)


# ---------------------------------------------------------------------- metrics


def _compact(labels) -> np.ndarray:
    return np.unique(np.asarray(labels), return_inverse=True)[1].ravel()


def contingency(y_true, y_pred) -> np.ndarray:
    """Counts table with predicted clusters as rows and true classes as columns."""
    t, p = _compact(y_true), _compact(y_pred)
    M = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(M, (p, t), 1)
    return M


def hungarian_match(confusion) -> np.ndarray:
    """Return ``perm`` with ``perm[cluster] = class`` maximizing matched counts."""
    M = np.asarray(confusion)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("confusion matrix must be square")
    rows, cols = linear_sum_assignment(M, maximize=True)
    perm = np.empty(M.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi_score(y_true, y_pred) -> float:
    M = contingency(y_true, y_pred).astype(float)
    n = M.sum()
    h_p, h_t = _entropy(M.sum(1)), _entropy(M.sum(0))
    if h_p == 0.0 and h_t == 0.0:
        return 1.0
    nz = M > 0
    outer = np.outer(M.sum(1), M.sum(0))
    mi = float((M[nz] / n * np.log(M[nz] * n / outer[nz])).sum())
    return float(np.clip(mi / (0.5 * (h_p + h_t)), 0.0, 1.0))


def ari_score(y_true, y_pred) -> float:
    M = contingency(y_true, y_pred).astype(float)
    n = M.sum()

    def comb2(x):
        return x * (x - 1.0) / 2.0

    index = comb2(M).sum()
    a, b = comb2(M.sum(1)).sum(), comb2(M.sum(0)).sum()
    expected = a * b / comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def compute_metrics(y_true, y_pred) -> MetricsReport:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if y_true.size == 0:
        raise ValueError("empty label arrays")
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    t, p = _compact(y_true), _compact(y_pred)
    size = max(t.max(), p.max()) + 1
    M = np.zeros((size, size), dtype=np.int64)
    np.add.at(M, (p, t), 1)
    perm = hungarian_match(M)
    mapped = perm[p]
    acc = float((mapped == t).mean())

    f1s = []
    for c in np.union1d(t, mapped):
        tp = np.sum((mapped == c) & (t == c))
        prec_den, rec_den = np.sum(mapped == c), np.sum(t == c)
        if tp == 0:
            f1s.append(0.0)
        else:
            prec, rec = tp / prec_den, tp / rec_den
            f1s.append(2 * prec * rec / (prec + rec))
    return MetricsReport(acc, nmi_score(t, p), ari_score(t, p), float(np.mean(f1s)))
