"""Dense/sparse containers and the elementwise kernels everything else uses.

Dense matrices are plain ``float64`` numpy arrays; sparse matrices are
``scipy.sparse.csr_array``.  Randomness always comes from an explicitly
passed ``numpy.random.Generator`` backed by the counter-based Philox bit
generator, never from global state.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based generator; same seed gives the same stream everywhere."""
    return np.random.Generator(np.random.Philox(int(seed)))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from ``rng``."""
    return [np.random.Generator(np.random.Philox(s)) for s in rng.bit_generator.seed_seq.spawn(n)]


def as_dense(m) -> np.ndarray:
    a = np.asarray(m, dtype=DTYPE)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def as_csr(m, symmetric: bool = False) -> sp.csr_array:
    s = sp.csr_array(m, dtype=DTYPE)
    s.sum_duplicates()
    s.sort_indices()
    if symmetric and (s != s.T).nnz:
        raise ValueError("matrix flagged symmetric is not structurally symmetric")
    return s


def matmul(a, b) -> np.ndarray:
    a, b = as_dense(a), as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def spmm(s: sp.csr_array, d) -> np.ndarray:
    d = as_dense(d)
    if s.shape[1] != d.shape[0]:
        raise ValueError(f"dimension mismatch: {s.shape} x {d.shape}")
    return np.asarray(s @ d, dtype=DTYPE)


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def row_l2_normalize(m, eps: float = 1e-12) -> np.ndarray:
    """Divide each row by ``max(||row||, eps)``; zero rows stay zero."""
    m = as_dense(m)
    return m / np.maximum(row_norms(m), eps)[:, None]


def row_l2_normalize_backward(x: np.ndarray, grad_out: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Vector-Jacobian product of :func:`row_l2_normalize` evaluated at ``x``."""
    norms = row_norms(x)
    denom = np.maximum(norms, eps)[:, None]
    y = x / denom
    big = (norms > eps)[:, None]
    proj = grad_out - y * np.einsum("ij,ij->i", y, grad_out)[:, None]
    return np.where(big, proj, grad_out) / denom


def hadamard(a, b) -> np.ndarray:
    a, b = as_dense(a), as_dense(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def row_softmax(m) -> np.ndarray:
    m = as_dense(m)
    z = np.exp(m - m.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def row_log_softmax(m) -> np.ndarray:
    m = as_dense(m)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def frobenius_sq_diff(a, b) -> float:
    a, b = as_dense(a), as_dense(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(diff * diff))
