"""Locally scaled similarity matrices, one per view.

A view's similarity is s_ij = exp(-||y_i - y_j|| / b_ij) with bandwidth
b_ij = sqrt(sigma_i * sigma_j), where sigma_i is a low quantile of row i's
off-diagonal distances.  Off-diagonal entries are clamped away from {0, 1}
so every log-odds downstream is finite; the diagonal is unused by any loss
and set to the upper clamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_QUANTILE = 0.1
DEFAULT_CLAMP = (1e-6, 1.0 - 1e-6)


@dataclass
class ViewData:
    """One view of the data: rows are items, columns are this view's variables."""

    values: np.ndarray
    view_id: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise ValueError(f"view {self.view_id}: values must be 2-d, got shape {self.values.shape}")


def pairwise_distances(view: ViewData) -> np.ndarray:
    """Euclidean distance matrix of a view.

    Computed from explicit coordinate differences so the result is exactly
    symmetric; rejects non-finite input naming the view and the row.
    """
    y = view.values
    bad = ~np.isfinite(y)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise ValueError(f"view {view.view_id}: non-finite value in row {row}")
    diff = y[:, None, :] - y[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def local_bandwidths(dist: np.ndarray, q: float = DEFAULT_QUANTILE) -> np.ndarray:
    """Per-item scale sigma_i: the q-quantile of row i's off-diagonal distances.

    Quantiles use linear interpolation on the sorted values.  A zero quantile
    falls back to the smallest strictly positive entry of the row; a row whose
    off-diagonal distances are all zero is an error.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    n = dist.shape[0]
    if n < 2:
        raise ValueError("need at least two items for bandwidths")
    mask = ~np.eye(n, dtype=bool)
    rows = dist[mask].reshape(n, n - 1)
    sigma = np.quantile(rows, q, axis=1, method="linear")
    for i in np.nonzero(sigma <= 0.0)[0]:
        positive = rows[i][rows[i] > 0.0]
        if positive.size == 0:
            raise ValueError(f"row {i}: all off-diagonal distances are zero")
        sigma[i] = positive.min()
    return sigma


def similarity_matrix(
    view: ViewData,
    q: float = DEFAULT_QUANTILE,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
) -> np.ndarray:
    """Locally scaled similarities for one view, clamped into (0, 1)."""
    s_min, s_max = clamp
    if not 0.0 < s_min < s_max < 1.0:
        raise ValueError(f"invalid clamp bounds {clamp}")
    dist = pairwise_distances(view)
    sigma = local_bandwidths(dist, q)
    band = np.sqrt(sigma[:, None] * sigma[None, :])
    s = np.exp(-dist / band)
    s = np.clip(s, s_min, s_max)
    np.fill_diagonal(s, s_max)
    return s


@dataclass
class SimilarityTensor:
    """Stacked per-view similarity matrices, shape (V, n, n), plus clamp bounds."""

    matrices: np.ndarray
    clamp: tuple[float, float] = DEFAULT_CLAMP

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.ndim == 2:
            self.matrices = self.matrices[None, :, :]
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError(f"matrices must have shape (V, n, n), got {self.matrices.shape}")

    @property
    def n_views(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def from_views(
        cls,
        views: Sequence[ViewData],
        q: float = DEFAULT_QUANTILE,
        clamp: tuple[float, float] = DEFAULT_CLAMP,
    ) -> "SimilarityTensor":
        if len(views) == 0:
            raise ValueError("no views given")
        sizes = {v.values.shape[0] for v in views}
        if len(sizes) != 1:
            raise ValueError(f"views disagree on item count: {sorted(sizes)}")
        mats = np.stack([similarity_matrix(v, q, clamp) for v in views])
        return cls(mats, clamp)
