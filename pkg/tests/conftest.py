import numpy as np
import pytest

from mvsimplex.model import ModelConfig, fit
from mvsimplex.similarity import SimilarityTensor, ViewData


def make_tensor(seed: int, n_views: int = 3, n: int = 15, p: int = 2) -> SimilarityTensor:
    """Random-data similarity tensor for algebra tests."""
    rng = np.random.default_rng(seed)
    views = [ViewData(rng.normal(size=(n, p)), view_id=v + 1) for v in range(n_views)]
    return SimilarityTensor.from_views(views)


def make_blobs(seed: int, n_per: int = 20, centers=((0.0, 0.0), (8.0, 8.0))):
    """Well-separated Gaussian blobs with labels."""
    rng = np.random.default_rng(seed)
    pts = []
    labels = []
    for k, c in enumerate(centers):
        pts.append(rng.normal(size=(n_per, len(c))) + np.asarray(c))
        labels.extend([k] * n_per)
    return np.vstack(pts), np.array(labels)


@pytest.fixture(scope="session")
def two_blob_fit():
    """One shared small fit on clean 2-cluster data (d=1, g=2)."""
    pts, labels = make_blobs(0)
    S = SimilarityTensor.from_views([ViewData(pts)])
    state = fit(S, ModelConfig(d=1, g=2, seed=0))
    return S, state, labels
