"""Core model: simplex-factorized co-assignment probabilities fit by EM.

Each of d parameterizations carries an n x g weight matrix whose rows live on
the simplex (stored as unconstrained logits, materialized by a row softmax).
A parameterization's co-assignment matrix is P* = W W^T.  Views are soft-
assigned to parameterizations (E step); logits descend an Adam-driven
expected loss and the mixture weights move to their posterior mode (M step).

The fitted objective is

    reg_loss = sum_{v,l} eta_vl sum_{j<i} kl(p*_ij^(l), s_ij^(v))
             + n_reg * sum_l R(W^(l)) + sum_l (1 - alpha) log(lambda_l)

with kl the Bernoulli Kullback-Leibler divergence, R a column-wise group
penalty on log(w/epsilon) excesses, and alpha the Dirichlet concentration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np
from scipy.special import xlogy

from .similarity import SimilarityTensor

GROUP_SMOOTHING = 1e-12
LAMBDA_FLOOR = 1e-12
INIT_NOISE = 1e-2
_P_LO = 1e-300
_P_HI = 1.0 - 1e-12


class FitDivergedError(RuntimeError):
    """Raised when a descent produces a non-finite loss or gradient."""


@dataclass
class ModelConfig:
    """Fit hyperparameters.  alpha_lambda defaults to 1/d and the group
    penalty multiplier defaults to the item count n, both resolved lazily."""

    d: int
    g: int
    alpha_lambda: float | None = None
    epsilon: float = 1e-3
    n_reg_multiplier: float | None = None
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    m_iters: int = 50
    window: int = 100
    conv_tol: float = 0.01
    max_em_iters: int = 2000
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.g < 1:
            raise ValueError(f"g must be >= 1, got {self.g}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.m_iters < 1 or self.max_em_iters < 1 or self.window < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.alpha_lambda is not None and self.alpha_lambda <= 0.0:
            raise ValueError(f"alpha_lambda must be positive, got {self.alpha_lambda}")

    @property
    def alpha(self) -> float:
        return self.alpha_lambda if self.alpha_lambda is not None else 1.0 / self.d

    def reg_multiplier(self, n_items: int) -> float:
        scale = self.n_reg_multiplier if self.n_reg_multiplier is not None else 1.0
        return float(scale) * float(n_items)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(**payload)


@dataclass
class FitState:
    """Everything the EM loop carries: logits (d, n, g), mixture weights
    lambda (d,), responsibilities eta (V, d), and the loss trail."""

    config: ModelConfig
    logits: np.ndarray
    lam: np.ndarray
    eta: np.ndarray
    loss_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    converged_by: str = ""
    init_assignment: np.ndarray | None = None  # K-means view labels the fit started from

    @property
    def weights(self) -> np.ndarray:
        return row_softmax(self.logits)

    @property
    def n_items(self) -> int:
        return self.logits.shape[1]

    @property
    def n_views(self) -> int:
        return self.eta.shape[0]


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical (i, j) index arrays for the strictly lower triangle.

    Pairs are ordered column-major by j: j=0 pairs first (i=1..n-1), then
    j=1, and so on.  Every flattened pair vector in the package uses this
    ordering.
    """
    jj, ii = np.triu_indices(n, k=1)
    return ii, jj


def row_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, shifted by the row max for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(shifted)
    w /= w.sum(axis=-1, keepdims=True)
    return w


def kl_bernoulli(p, s):
    """Bernoulli KL divergence kl(p || s) with the 0 log 0 = 0 convention.

    p may touch {0, 1}; s must stay strictly inside (0, 1).
    """
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("p must lie in [0, 1]")
    if np.any(s <= 0.0) or np.any(s >= 1.0):
        raise ValueError("s must lie strictly inside (0, 1)")
    val = xlogy(p, p / s) + xlogy(1.0 - p, (1.0 - p) / (1.0 - s))
    if val.ndim == 0:
        return float(val)
    return val


def coassignment_matrix(weights: np.ndarray) -> np.ndarray:
    """P* = W W^T for one simplex weight matrix (n, g)."""
    return weights @ weights.T


def group_regularizer(weights: np.ndarray, epsilon: float, smoothing: float = GROUP_SMOOTHING) -> float:
    """Column-wise group penalty on one W.

    R(W) = sum_k [ sqrt(smoothing + sum_i max(0, log(w_ik / epsilon))^2)
                   - sqrt(smoothing) ]

    Zero exactly when every entry is at or below epsilon; the smoothing term
    keeps the gradient finite at fully shrunk columns.
    """
    h = np.maximum(0.0, np.log(weights) - np.log(epsilon))
    g = weights.shape[1]
    return float(np.sqrt(smoothing + (h * h).sum(axis=0)).sum() - g * np.sqrt(smoothing))


def dirichlet_penalty(lam: np.ndarray, alpha: float) -> float:
    """Negative log Dirichlet(alpha) kernel, sum_l (1 - alpha) log(lambda_l),
    with lambda floored at 1e-12 inside the log."""
    lam = np.maximum(np.asarray(lam, dtype=float), LAMBDA_FLOOR)
    return float((1.0 - alpha) * np.log(lam).sum())


class PairWorkspace(NamedTuple):
    ii: np.ndarray
    jj: np.ndarray
    logit_flat: np.ndarray   # (V, npairs) log-odds of the similarities
    log1m_sum: np.ndarray    # (V,) sum over pairs of log(1 - s)
    npairs: int


def pair_workspace(S: SimilarityTensor) -> PairWorkspace:
    """Flattened pair quantities for a similarity tensor, cached on S."""
    cached = getattr(S, "_pair_cache", None)
    if cached is not None:
        return cached
    n = S.n_items
    ii, jj = pair_indices(n)
    flat = S.matrices[:, ii, jj]
    log1m = np.log1p(-flat)
    logit_flat = np.log(flat)
    logit_flat -= log1m
    ws = PairWorkspace(ii, jj, logit_flat, log1m.sum(axis=1), ii.size)
    S._pair_cache = ws
    return ws


def _coassignment_flat(logits: np.ndarray, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    W = row_softmax(logits)
    P = np.clip(W @ W.transpose(0, 2, 1), _P_LO, _P_HI)
    return P[:, ii, jj]


def view_divergences(logits: np.ndarray, S: SimilarityTensor) -> np.ndarray:
    """Matrix D with D[v, l] = sum_{j<i} kl(p*_ij^(l), s_ij^(v))."""
    ws = pair_workspace(S)
    pf = _coassignment_flat(logits, ws.ii, ws.jj)
    log1m_p = np.log1p(-pf)
    logit_p = np.log(pf) - log1m_p
    entropy_part = (pf * logit_p + log1m_p).sum(axis=1)
    return entropy_part[None, :] - ws.logit_flat @ pf.T - ws.log1m_sum[:, None]


def data_fit_loss(p_stars: np.ndarray, S: SimilarityTensor, eta: np.ndarray) -> float:
    """Expected data-fit loss, the direct triple sum
    sum_{v,l} eta_vl sum_{j<i} kl(p*_ij^(l), s_ij^(v))."""
    p_stars = np.asarray(p_stars, dtype=float)
    if p_stars.ndim == 2:
        p_stars = p_stars[None, :, :]
    ws = pair_workspace(S)
    s_flat = S.matrices[:, ws.ii, ws.jj]
    total = 0.0
    for l in range(p_stars.shape[0]):
        p_flat = p_stars[l, ws.ii, ws.jj]
        kl = kl_bernoulli(p_flat[None, :], s_flat).sum(axis=1)
        total += float(eta[:, l] @ kl)
    return total


class KappaGamma(NamedTuple):
    """Per-parameterization sufficient statistics of the M-step objective:
    kappa (d, n, n) pair coefficients, gamma (d,) responsibility masses, and
    the eta-independent constant C linking the refactored and direct forms."""

    kappa: np.ndarray
    gamma: np.ndarray
    constant: float


def precompute_kappa_gamma(S: SimilarityTensor, eta: np.ndarray) -> KappaGamma:
    """kappa^(l) = -sum_v eta_vl logit(s^(v)), gamma_l = sum_v eta_vl, and
    C = -sum_v sum_{j<i} log(1 - s^(v))."""
    ws = pair_workspace(S)
    n = S.n_items
    d = eta.shape[1]
    kappa_flat = -(eta.T @ ws.logit_flat)
    kappa = np.zeros((d, n, n))
    kappa[:, ws.ii, ws.jj] = kappa_flat
    kappa[:, ws.jj, ws.ii] = kappa_flat
    gamma = eta.sum(axis=0)
    return KappaGamma(kappa, gamma, float(-ws.log1m_sum.sum()))


def refactored_data_loss(logits: np.ndarray, precomp: KappaGamma) -> float:
    """Expected data-fit loss in kappa/gamma form (constant C dropped):
    sum_l sum_{j<i} kappa_ij p*_ij + gamma_l [p* logit(p*) + log(1 - p*)]."""
    n = logits.shape[1]
    ii, jj = pair_indices(n)
    pf = _coassignment_flat(logits, ii, jj)
    log1m_p = np.log1p(-pf)
    logit_p = np.log(pf) - log1m_p
    entropy_part = (pf * logit_p + log1m_p).sum(axis=1)
    kappa_flat = precomp.kappa[:, ii, jj]
    return float((kappa_flat * pf).sum() + precomp.gamma @ entropy_part)


def descent_objective(logits: np.ndarray, precomp: KappaGamma, epsilon: float, n_reg: float) -> float:
    """The quantity the M-step descends: refactored data loss plus the
    group penalties (the Dirichlet term is constant in the logits)."""
    W = row_softmax(logits)
    reg = sum(group_regularizer(W[l], epsilon) for l in range(W.shape[0]))
    return refactored_data_loss(logits, precomp) + n_reg * reg


def expected_loss_gradient(logits: np.ndarray, precomp: KappaGamma, epsilon: float, n_reg: float) -> np.ndarray:
    """Analytic gradient of descent_objective with respect to the logits.

    Per pair the data derivative is kappa + gamma * logit(p*); chaining
    through P* = W W^T gives G W per parameterization, and the softmax rows
    map weight-space gradients u to w * (u - <u, w>).
    """
    W = row_softmax(logits)
    P = np.clip(W @ W.transpose(0, 2, 1), _P_LO, _P_HI)
    G = precomp.kappa + precomp.gamma[:, None, None] * (np.log(P) - np.log1p(-P))
    idx = np.arange(W.shape[1])
    G[:, idx, idx] = 0.0
    grad_w = G @ W
    h = np.maximum(0.0, np.log(W) - np.log(epsilon))
    col_norm = np.sqrt(GROUP_SMOOTHING + (h * h).sum(axis=1, keepdims=True))
    grad_w += n_reg * h / (W * col_norm)
    inner = (grad_w * W).sum(axis=2, keepdims=True)
    return W * (grad_w - inner)


def _adam_descend(logits: np.ndarray, precomp: KappaGamma, config: ModelConfig, n_reg: float) -> np.ndarray:
    """config.m_iters Adam iterations on all logits jointly.  Moments start
    at zero for every call."""
    x = logits.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, config.m_iters + 1):
        grad = expected_loss_gradient(x, precomp, config.epsilon, n_reg)
        if not np.all(np.isfinite(grad)):
            raise FitDivergedError("non-finite gradient during descent")
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * grad * grad
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        x -= config.step_size * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return x


def lambda_mode_update(eta: np.ndarray, alpha: float) -> np.ndarray:
    """Posterior-mode mixture weights, lambda_l proportional to
    max(0, alpha - 1 + sum_v eta_vl).

    When every numerator vanishes the mass goes uniformly to the
    parameterizations with the largest responsibility column sum.
    """
    col = eta.sum(axis=0)
    raw = np.maximum(0.0, alpha - 1.0 + col)
    total = raw.sum()
    if total > 0.0:
        return raw / total
    winners = col == col.max()
    lam = np.zeros_like(col)
    lam[winners] = 1.0 / winners.sum()
    return lam


def m_step(state: FitState, precomp: KappaGamma, n_reg: float | None = None,
           update_lambda: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One M step: Adam descent on the logits against the expected loss plus
    penalties, then the mode update for lambda.  Returns (logits, lambda)
    without mutating the state."""
    if n_reg is None:
        n_reg = state.config.reg_multiplier(state.n_items)
    logits = _adam_descend(state.logits, precomp, state.config, n_reg)
    lam = lambda_mode_update(state.eta, state.config.alpha) if update_lambda else state.lam.copy()
    return logits, lam


def eta_from_divergences(divergences: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Responsibilities eta_vl proportional to lambda_l exp(-D_vl), computed
    in log space with a per-view max subtraction.  A zero lambda forces an
    exact zero column."""
    lam = np.asarray(lam, dtype=float)
    alive = lam > 0.0
    if not alive.any():
        raise ValueError("all mixture weights are zero")
    log_lam = np.full(lam.shape, -np.inf)
    log_lam[alive] = np.log(lam[alive])
    log_eta = log_lam[None, :] - divergences
    log_eta[:, ~alive] = -np.inf
    log_eta -= log_eta.max(axis=1, keepdims=True)
    eta = np.exp(log_eta)
    eta[:, ~alive] = 0.0
    eta /= eta.sum(axis=1, keepdims=True)
    return eta


def e_step(state: FitState, S: SimilarityTensor) -> np.ndarray:
    """Responsibilities of every view for every parameterization."""
    return eta_from_divergences(view_divergences(state.logits, S), state.lam)


def reg_loss(state: FitState, S: SimilarityTensor) -> float:
    """Expected data-fit loss plus group and Dirichlet penalties; the
    quantity tracked for convergence."""
    divergences = view_divergences(state.logits, S)
    return _reg_loss_from_divergences(state, divergences)


def _reg_loss_from_divergences(state: FitState, divergences: np.ndarray) -> float:
    cfg = state.config
    n_reg = cfg.reg_multiplier(state.n_items)
    W = state.weights
    reg = sum(group_regularizer(W[l], cfg.epsilon) for l in range(W.shape[0]))
    data = float((state.eta * divergences).sum())
    return data + n_reg * reg + dirichlet_penalty(state.lam, cfg.alpha)


def fit(S: SimilarityTensor, config: ModelConfig) -> FitState:
    """Full EM fit with restarts.

    Each restart initializes from its own derived seed, then alternates
    E step / kappa-gamma precompute / M step, recording reg_loss after every
    EM iteration.  Convergence fires when the relative decrease over the
    trailing `window` iterations drops below conv_tol, or immediately when
    two consecutive losses are bit-equal (nothing left to move); the
    iteration cap is recorded as non-convergence.  The restart with the
    lowest final reg_loss wins.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.restarts)
    n_reg = config.reg_multiplier(S.n_items)
    best: FitState | None = None
    last_error: Exception | None = None
    for child in children:
        try:
            state = _fit_single(S, config, child, n_reg)
        except FitDivergedError as err:
            last_error = err
            continue
        if best is None or state.loss_history[-1] < best.loss_history[-1]:
            best = state
    if best is None:
        raise FitDivergedError(f"every restart diverged; last error: {last_error}")
    return best


def _fit_single(S: SimilarityTensor, config: ModelConfig, seed, n_reg: float) -> FitState:
    from .initialization import initialize

    state = initialize(S, config, seed)
    history = state.loss_history
    divergences = view_divergences(state.logits, S)
    for _ in range(config.max_em_iters):
        state.eta = eta_from_divergences(divergences, state.lam)
        precomp = precompute_kappa_gamma(S, state.eta)
        state.logits, state.lam = m_step(state, precomp, n_reg)
        divergences = view_divergences(state.logits, S)
        loss = _reg_loss_from_divergences(state, divergences)
        if not np.isfinite(loss):
            raise FitDivergedError("non-finite loss during descent")
        history.append(loss)
        if history[-1] == history[-2]:
            state.converged = True
            state.converged_by = "stationary"
            break
        if len(history) > config.window:
            base = history[-1 - config.window]
            decrease = (base - history[-1]) / max(abs(base), 1e-300)
            if decrease < config.conv_tol:
                state.converged = True
                state.converged_by = "window"
                break
    else:
        state.converged = False
        state.converged_by = "cap"
    state.iterations = len(history) - 1
    return state


FIT_STATE_FORMAT = "mvsimplex-fit-state"
FIT_STATE_VERSION = 1


def save_fit_state(state: FitState, path) -> None:
    payload = {
        "format": FIT_STATE_FORMAT,
        "version": FIT_STATE_VERSION,
        "config": state.config.to_dict(),
        "logits": state.logits.tolist(),
        "lambda": state.lam.tolist(),
        "eta": state.eta.tolist(),
        "loss_history": [float(x) for x in state.loss_history],
        "iterations": state.iterations,
        "converged": state.converged,
        "converged_by": state.converged_by,
        "init_assignment": None if state.init_assignment is None
        else [int(x) for x in state.init_assignment],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_fit_state(path) -> FitState:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FIT_STATE_FORMAT:
        raise ValueError(f"{path}: not a fit-state file")
    if payload.get("version") != FIT_STATE_VERSION:
        raise ValueError(f"{path}: unsupported fit-state version {payload.get('version')}")
    return FitState(
        config=ModelConfig.from_dict(payload["config"]),
        logits=np.asarray(payload["logits"], dtype=float),
        lam=np.asarray(payload["lambda"], dtype=float),
        eta=np.asarray(payload["eta"], dtype=float),
        loss_history=[float(x) for x in payload["loss_history"]],
        iterations=int(payload["iterations"]),
        converged=bool(payload["converged"]),
        converged_by=str(payload["converged_by"]),
        init_assignment=None if payload.get("init_assignment") is None
        else np.asarray(payload["init_assignment"], dtype=int),
    )
