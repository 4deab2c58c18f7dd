"""Synthetic data generators and the variable screening rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .similarity import ViewData

SINGLE_VIEW_SETTINGS = ("a", "b", "c", "d", "e", "f")


@dataclass
class SimSpec:
    """Echo of a simulation request, written next to the artifacts."""

    setting: str
    n: int
    v: int
    seed: int
    params: dict = field(default_factory=dict)


def _two_gaussians(rng, n, z, shift):
    y = rng.standard_normal((n, 2))
    y[z == 1] += shift
    return y


def single_view(setting: str, n: int, seed) -> tuple[ViewData, np.ndarray]:
    """One two-component 2-d mixture view plus its item labels.

    Settings: (a), (b), (c) unit Gaussians centered at (0,0) against
    (10,10), (3,3), (2,2); (d) componentwise Exp(1)-4 against -Exp(1);
    (e) [Exp(1), Exp(rate 10)] against the same shifted by (2, 15);
    (f) independent standard Cauchy components against a (3,3) shift.
    Labels are iid fair coin flips.
    """
    if setting not in SINGLE_VIEW_SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, size=n)
    if setting == "a":
        y = _two_gaussians(rng, n, z, np.array([10.0, 10.0]))
    elif setting == "b":
        y = _two_gaussians(rng, n, z, np.array([3.0, 3.0]))
    elif setting == "c":
        y = _two_gaussians(rng, n, z, np.array([2.0, 2.0]))
    elif setting == "d":
        y = rng.exponential(1.0, size=(n, 2))
        y[z == 0] -= 4.0
        y[z == 1] *= -1.0
    elif setting == "e":
        y = np.column_stack([rng.exponential(1.0, size=n), rng.exponential(0.1, size=n)])
        y[z == 1] += np.array([2.0, 15.0])
    else:
        y = rng.standard_cauchy(size=(n, 2))
        y[z == 1] += 3.0
    return ViewData(values=y, view_id=1), z


def _gauss_logpdf(mean: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def logpdf(y):
        diff = y - mean[None, :]
        return -np.log(2.0 * np.pi) - 0.5 * (diff * diff).sum(axis=1)
    return logpdf


def _shifted_exp_logpdf(rates: np.ndarray, shifts: np.ndarray, signs: np.ndarray):
    """Componentwise density of sign * Exp(rate) + shift."""
    def logpdf(y):
        t = (y - shifts[None, :]) * signs[None, :]
        ok = (t >= 0.0).all(axis=1)
        val = (np.log(rates)[None, :] - rates[None, :] * t).sum(axis=1)
        return np.where(ok, val, -np.inf)
    return logpdf


def _cauchy_logpdf(shift: float) -> Callable[[np.ndarray], np.ndarray]:
    def logpdf(y):
        t = y - shift
        return -(np.log(np.pi) + np.log1p(t * t)).sum(axis=1)
    return logpdf


def mixture_log_densities(setting: str):
    """(log_densities, weights) of a setting's generating mixture, for the
    oracle co-assignment matrix."""
    ones = np.ones(2)
    if setting == "a":
        comps = [_gauss_logpdf(np.zeros(2)), _gauss_logpdf(np.full(2, 10.0))]
    elif setting == "b":
        comps = [_gauss_logpdf(np.zeros(2)), _gauss_logpdf(np.full(2, 3.0))]
    elif setting == "c":
        comps = [_gauss_logpdf(np.zeros(2)), _gauss_logpdf(np.full(2, 2.0))]
    elif setting == "d":
        comps = [
            _shifted_exp_logpdf(ones, np.full(2, -4.0), ones),
            _shifted_exp_logpdf(ones, np.zeros(2), -ones),
        ]
    elif setting == "e":
        rates = np.array([1.0, 10.0])
        comps = [
            _shifted_exp_logpdf(rates, np.zeros(2), ones),
            _shifted_exp_logpdf(rates, np.array([2.0, 15.0]), ones),
        ]
    elif setting == "f":
        comps = [_cauchy_logpdf(0.0), _cauchy_logpdf(3.0)]
    else:
        raise ValueError(f"unknown setting {setting!r}")
    return comps, np.array([0.5, 0.5])


DEFAULT_PATTERN_MEANS = np.array([[0.0, 0.0], [2.0, 2.0], [-2.0, -2.0]])


def multi_view(
    n: int,
    v: int,
    d0: int = 5,
    g0: int = 3,
    dirichlet_alpha: float = 0.5,
    means: np.ndarray | None = None,
    seed=0,
) -> tuple[list[ViewData], np.ndarray, np.ndarray]:
    """V two-dimensional views sharing d0 clustering patterns.

    Each pattern is an n x g0 matrix of Dirichlet(dirichlet_alpha) rows;
    views pick a pattern uniformly, draw per-item labels from the pattern's
    rows, and emit unit Gaussians at the label's mean.  Returns
    (views, pattern index per view, labels (V, n)).
    """
    if means is None:
        if g0 != 3:
            raise ValueError("means must be given when g0 != 3")
        means = DEFAULT_PATTERN_MEANS
    means = np.asarray(means, dtype=float)
    if means.shape != (g0, 2):
        raise ValueError(f"means must have shape ({g0}, 2), got {means.shape}")
    rng = np.random.default_rng(seed)
    patterns = rng.dirichlet(np.full(g0, dirichlet_alpha), size=(d0, n))
    x0 = rng.integers(0, d0, size=v)
    labels = np.empty((v, n), dtype=int)
    views = []
    for view in range(v):
        cum = patterns[x0[view]].cumsum(axis=1)
        lab = (rng.random(n)[:, None] > cum).sum(axis=1)
        labels[view] = lab
        y = means[lab] + rng.standard_normal((n, 2))
        views.append(ViewData(values=y, view_id=view + 1))
    return views, x0, labels


def consensus_views(n: int, seed=0) -> tuple[list[ViewData], np.ndarray, np.ndarray]:
    """Ten 1-d views over one shared 3-group truth.

    View 1 sees Gaussians at (0, 2, 2) so it resolves two clusters, view 2
    sees (0, 1, 2) and resolves three, and views 3-10 are pure N(0, 1)
    noise.  Returns (views, per-view truth labels (10, n), structure flags).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 3, size=n)
    means1 = np.array([0.0, 2.0, 2.0])
    means2 = np.array([0.0, 1.0, 2.0])
    views = [
        ViewData(values=means1[z] + rng.standard_normal(n), view_id=1),
        ViewData(values=means2[z] + rng.standard_normal(n), view_id=2),
    ]
    for k in range(3, 11):
        views.append(ViewData(values=rng.standard_normal(n), view_id=k))
    labels = np.zeros((10, n), dtype=int)
    labels[0] = (z > 0).astype(int)
    labels[1] = z
    structured = np.array([True, True] + [False] * 8)
    return views, labels, structured


def screen_columns(data: np.ndarray, top_v: int) -> np.ndarray:
    """Indices of the top_v columns by sd / median, descending.

    Columns with a zero median rank last; ties keep the original column
    order.  top_v is truncated to the column count.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError(f"data must be 2-d, got shape {data.shape}")
    if top_v < 1:
        raise ValueError(f"top_v must be >= 1, got {top_v}")
    sd = data.std(axis=0, ddof=1) if data.shape[0] > 1 else np.zeros(data.shape[1])
    med = np.median(data, axis=0)
    nonzero = np.nonzero(med != 0.0)[0]
    zero = np.nonzero(med == 0.0)[0]
    ratio = sd[nonzero] / med[nonzero]
    ranked = nonzero[np.argsort(-ratio, kind="stable")]
    order = np.concatenate([ranked, zero]).astype(int)
    return order[: min(top_v, data.shape[1])]
