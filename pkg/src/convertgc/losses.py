"""Contrastive, semantic and label-matching losses with their analytic gradients.

Every loss returns ``(value, grads)`` where ``grads`` holds d loss / d input
for each matrix argument, in argument order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import as_dense, row_log_softmax, row_softmax

LOG_CLAMP = np.log(1e-12)
SEMANTIC_VARIANTS = ("aligned", "cross")


@dataclass(frozen=True)
class LossBreakdown:
    l_c: float
    l_s: float
    l_m: float
    total: float
    alpha: float
    beta: float
    stage2: bool

    def as_dict(self) -> dict:
        return {"l_c": self.l_c, "l_s": self.l_s, "l_m": self.l_m, "total": self.total}


def contrastive_loss(anchor, other, include_positive: bool = False):
    """Mean over i of -log(exp(s_ii) / sum_{k != i} exp(s_ik)), s = anchor @ other.T.

    Rows are expected to be L2-normalized so the dot product is the cosine
    similarity.  ``include_positive`` puts k = i back into the denominator
    (the usual InfoNCE form).
    """
    A, B = as_dense(anchor), as_dense(other)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    n = A.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least two samples")
    S = A @ B.T
    logits = S.copy()
    if not include_positive:
        np.fill_diagonal(logits, -np.inf)
    mx = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - mx)
    denom = ex.sum(axis=1, keepdims=True)
    lse = (mx + np.log(denom)).ravel()
    loss = float(np.mean(lse - np.diag(S)))

    G = ex / denom
    G[np.diag_indices(n)] -= 1.0
    G /= n
    return loss, (G @ B, G.T @ A)


def semantic_loss(E1, E2, Hr, Hp, variant: str = "aligned"):
    """Distance between the recover-side and perturb-side similarity matrices.

    ``aligned``: S_r = E1 * Hr, S_p = E2 * Hp (row-wise products), mean squared
    difference.  ``cross``: S_r = E1 Hr^T, S_p = E1 Hp^T, squared Frobenius
    distance divided by n^2.  Gradients are returned for (E1, E2, Hr, Hp).
    """
    E1, E2, Hr, Hp = (as_dense(m) for m in (E1, E2, Hr, Hp))
    if not (E1.shape == E2.shape == Hr.shape == Hp.shape):
        raise ValueError("all four embedding matrices must share a shape")
    if variant == "aligned":
        D = E1 * Hr - E2 * Hp
        loss = float(np.mean(D * D))
        R = 2.0 * D / D.size
        return loss, (R * Hr, -R * Hp, R * E1, -R * E2)
    if variant == "cross":
        n = E1.shape[0]
        D = E1 @ (Hr - Hp).T
        loss = float(np.sum(D * D)) / n**2
        R = 2.0 * D / n**2
        gHr = R.T @ E1
        return loss, (R @ (Hr - Hp), np.zeros_like(E2), gHr, -gHr)
    raise ValueError(f"unknown semantic variant {variant!r}")


def _cross_entropy(logits: np.ndarray, idx: np.ndarray, targets: np.ndarray):
    z = logits[idx]
    logp = row_log_softmax(z)
    picked = logp[np.arange(len(idx)), targets]
    clamped = picked < LOG_CLAMP
    loss = float(-np.mean(np.maximum(picked, LOG_CLAMP)))
    g = row_softmax(z)
    g[np.arange(len(idx)), targets] -= 1.0
    g[clamped] = 0.0
    full = np.zeros_like(logits)
    full[idx] = g / len(idx)
    return loss, full


def label_matching_loss(logits1, logits2, indices, targets):
    """Cross-entropy of both views' softmax against the pseudo labels, summed over views.

    Only rows in ``indices`` contribute; the per-view value is a mean over
    those rows.  Pseudo labels are constants.
    """
    L1, L2 = as_dense(logits1), as_dense(logits2)
    if L1.shape != L2.shape:
        raise ValueError("both views must have the same shape")
    idx = np.asarray(indices, dtype=np.int64)
    tgt = np.asarray(targets, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty high-confidence set")
    if idx.shape != tgt.shape:
        raise ValueError("indices and targets must align")
    if idx.min() < 0 or idx.max() >= L1.shape[0] or tgt.min() < 0 or tgt.max() >= L1.shape[1]:
        raise ValueError("index or pseudo label out of range")
    a, g1 = _cross_entropy(L1, idx, tgt)
    b, g2 = _cross_entropy(L2, idx, tgt)
    return a + b, (g1, g2)


def total_loss(l_c: float, l_s: float, l_m: float, alpha: float, beta: float, stage2: bool) -> LossBreakdown:
    parts = (l_c, l_s, l_m)
    if not all(np.isfinite(parts)):
        raise FloatingPointError(f"non-finite loss component in {parts}")
    total = l_c + alpha * l_s + (beta * l_m if stage2 else 0.0)
    return LossBreakdown(float(l_c), float(l_s), float(l_m), float(total), alpha, beta, stage2)
