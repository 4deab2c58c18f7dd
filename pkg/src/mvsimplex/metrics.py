"""Clustering and matrix-recovery metrics."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def nmi(a, b) -> float:
    """Normalized mutual information, 2*I / (H(a) + H(b)), natural logs.

    Degenerate conventions: two single-cluster labelings are identical as
    partitions and score 1; if exactly one side is single-cluster the score
    is 0; an ordinary contingency table is scored by the formula.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty label vectors")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ka = ai.max() + 1
    kb = bi.max() + 1
    n = a.size
    cont = np.zeros((ka, kb), dtype=float)
    np.add.at(cont, (ai, bi), 1.0)
    pa = cont.sum(axis=1) / n
    pb = cont.sum(axis=0) / n
    ha = -np.sum(pa * np.log(pa, where=pa > 0, out=np.zeros_like(pa)))
    hb = -np.sum(pb * np.log(pb, where=pb > 0, out=np.zeros_like(pb)))
    if ha <= 0.0 and hb <= 0.0:
        return 1.0
    if ha <= 0.0 or hb <= 0.0:
        return 0.0
    pj = cont / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pj / (pa[:, None] * pb[None, :])
        terms = np.where(pj > 0, pj * np.log(ratio), 0.0)
    info = terms.sum()
    return float(2.0 * info / (ha + hb))


def mad(a: np.ndarray, b: np.ndarray) -> float:
    """Median absolute deviation between two square matrices over the
    strictly lower triangle (the diagonal never participates)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"need two square matrices of equal shape, got {a.shape} and {b.shape}")
    ii, jj = np.tril_indices(a.shape[0], k=-1)
    return float(np.median(np.abs(a[ii, jj] - b[ii, jj])))


def oracle_coassignment(
    points: np.ndarray,
    log_densities: Sequence[Callable[[np.ndarray], np.ndarray]],
    weights: Sequence[float],
) -> np.ndarray:
    """Ground-truth co-assignment probabilities under a known mixture.

    p_ij = sum_k tau_k(y_i) tau_k(y_j) with tau_k the posterior component
    probability pi_k f_k(y) / sum_m pi_m f_m(y).  log_densities maps an
    (n, p) array to n per-item log densities; -inf marks points outside a
    component's support.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    weights = np.asarray(weights, dtype=float)
    if len(log_densities) != weights.size:
        raise ValueError("one weight per component required")
    if np.any(weights <= 0) or not np.isclose(weights.sum(), 1.0):
        raise ValueError("component weights must be positive and sum to 1")
    logpost = np.stack([np.log(w) + f(points) for w, f in zip(weights, log_densities)], axis=1)
    top = logpost.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise ValueError("a point has zero density under every component")
    tau = np.exp(logpost - top)
    tau /= tau.sum(axis=1, keepdims=True)
    return tau @ tau.T
