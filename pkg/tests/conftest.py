import numpy as np
import pytest


def numeric_grad(f, X, h=1e-6):
    """Central-difference gradient of scalar ``f`` w.r.t. every entry of ``X`` (in place)."""
    G = np.zeros_like(X)
    flat, gflat = X.reshape(-1), G.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return G


def unit_rows(rng, n, d):
    M = rng.standard_normal((n, d))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
