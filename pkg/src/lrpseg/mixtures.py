"""1-D mixture models fitted by expectation-maximization.

Two models live here:

* a 3-component Gaussian mixture over raw relevance scores, initialized by a
  deterministic k-means and fitted by plain EM (log-likelihood is provably
  non-decreasing per iteration);
* a 2-component Beta mixture over scores normalized to [0, 1], fitted by EM
  with two hard-assignment overrides in the expectation step: values above
  the mean of the high component belong to it with probability 1, and values
  inside the lower 90% quantile mass of the low component belong to the low
  component with probability 1 (the high-component override wins conflicts).
  The overrides keep the huge population of small background values from
  dragging the damage component down.

The Beta density and CDF are evaluated directly: the density through
log-gamma, the CDF through the regularized incomplete beta function computed
with a vectorized continued fraction (modified Lentz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateFitError

_LOG_2PI = math.log(2.0 * math.pi)

# Beta parameters are clamped into this range by the moment estimator.
BETA_PARAM_MIN = 1e-3
BETA_PARAM_MAX = 1e4

EM_MAX_ITER = 200
EM_REL_TOL = 1e-7

# Relevance maps carry an exact atom at zero (winner-take-all routing zeroes
# most pixels), so an unfloored Gaussian M-step would collapse on real data.
# The floor is far below any variance of interest but keeps densities finite.
GMM_VARIANCE_FLOOR = 1e-10


KMEANS_RESTARTS = 4
KMEANS_ITERS = 20


def _kmeans_seed_centers(v: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next center is drawn with probability
    proportional to the squared distance from the centers chosen so far."""
    centers = [v[rng.integers(v.size)]]
    for _ in range(k - 1):
        d2 = np.min((v[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:  # fewer distinct values than centers; duplicate is harmless
            centers.append(v[rng.integers(v.size)])
            continue
        centers.append(v[np.searchsorted(np.cumsum(d2 / total), rng.uniform(), side="right")
                         .clip(0, v.size - 1)])
    return np.asarray(centers, dtype=np.float64)


def _lloyd(v: np.ndarray, centers: np.ndarray, iters: int) -> tuple[np.ndarray, np.ndarray, float]:
    k = centers.shape[0]
    labels = np.full(v.size, -1, dtype=np.int64)
    for _ in range(iters):
        labels_new = np.argmin(np.abs(v[:, None] - centers[None, :]), axis=1)
        for j in range(k):
            sel = labels_new == j
            if sel.any():
                centers[j] = v[sel].mean()
            else:  # re-seed an empty cluster at the point farthest from all centers
                dist = np.min(np.abs(v[:, None] - centers[None, :]), axis=1)
                centers[j] = v[int(np.argmax(dist))]
        if np.array_equal(labels_new, labels):
            break
        labels = labels_new
    sse = float(((v - centers[labels]) ** 2).sum())
    return centers, labels, sse


def kmeans_1d(values: np.ndarray, k: int, seed: int, iters: int = KMEANS_ITERS,
              restarts: int = KMEANS_RESTARTS) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 1-D k-means: k-means++ seeding, up to ``iters`` Lloyd
    steps, best of ``restarts`` runs by within-cluster SSE. All randomness
    comes from ``seed``. Returns (centers, labels)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < k:
        raise DataError(f"need at least {k} values for k-means with k={k}, got {v.size}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers, labels, sse = _lloyd(v, _kmeans_seed_centers(v, k, rng), iters)
        if best is None or sse < best[2]:
            best = (centers, labels, sse)
    return best[0], best[1]


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


# ---------------------------------------------------------------------------
# Gaussian mixture
# ---------------------------------------------------------------------------

@dataclass
class GaussianMixture:
    weights: np.ndarray      # (k,)
    means: np.ndarray        # (k,)
    variances: np.ndarray    # (k,)
    responsibilities: np.ndarray  # (n, k) posteriors for the training values
    log_likelihoods: list[float] = field(default_factory=list)
    n_iter: int = 0


def _gauss_logpdf(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    return -0.5 * ((x[:, None] - mean[None, :]) ** 2 / var[None, :] + np.log(var)[None, :] + _LOG_2PI)


def gaussian_posteriors(model: GaussianMixture, values: np.ndarray) -> np.ndarray:
    """Posterior component memberships for arbitrary values."""
    x = np.asarray(values, dtype=np.float64).ravel()
    logr = np.log(model.weights)[None, :] + _gauss_logpdf(x, model.means, model.variances)
    return np.exp(logr - _logsumexp(logr, axis=1)[:, None])


class _Collapse(Exception):
    pass


def _fit_gmm_once(x: np.ndarray, k: int, seed: int, max_iter: int, tol: float) -> GaussianMixture:
    centers, labels = kmeans_1d(x, k, seed)
    order = np.argsort(centers)
    weights = np.empty(k)
    means = np.empty(k)
    variances = np.empty(k)
    overall_var = max(x.var(), 1e-8)
    for out_j, j in enumerate(order):
        sel = labels == j
        weights[out_j] = max(sel.mean(), 1e-6)
        means[out_j] = centers[j]
        variances[out_j] = max(x[sel].var() if sel.any() else 0.0, overall_var * 1e-6)
    weights /= weights.sum()

    lls: list[float] = []
    resp = None
    for it in range(max_iter):
        logr = np.log(weights)[None, :] + _gauss_logpdf(x, means, variances)
        norm = _logsumexp(logr, axis=1)
        ll = float(norm.sum())
        resp = np.exp(logr - norm[:, None])
        lls.append(ll)
        if len(lls) > 1 and abs(ll - lls[-2]) <= tol * abs(lls[-2]):
            break
        nk = resp.sum(axis=0)
        weights = nk / x.size
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        if not np.isfinite(variances).all() or variances.min() < 0:
            raise _Collapse()
        variances = np.maximum(variances, GMM_VARIANCE_FLOOR)
    return GaussianMixture(weights=weights, means=means, variances=variances,
                           responsibilities=resp, log_likelihoods=lls, n_iter=len(lls))


def fit_gaussian_mixture(values: np.ndarray, n_components: int = 3, seed: int = 0,
                         max_iter: int = EM_MAX_ITER, tol: float = EM_REL_TOL) -> GaussianMixture:
    """EM fit of a 1-D Gaussian mixture; on variance collapse the fit is
    retried once with a shifted seed before giving up."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < n_components:
        raise DataError(f"need at least {n_components} values, got {x.size}")
    try:
        return _fit_gmm_once(x, n_components, seed, max_iter, tol)
    except _Collapse:
        try:
            return _fit_gmm_once(x, n_components, seed + 1, max_iter, tol)
        except _Collapse:
            raise DegenerateFitError(
                f"gaussian mixture collapsed (component variance < 1e-12) for seeds {seed} and {seed + 1}"
            ) from None


def damage_component(model: GaussianMixture, max_value: float) -> int:
    """Index of the component whose density is largest at the maximum score."""
    x = np.asarray([max_value], dtype=np.float64)
    return int(np.argmax(_gauss_logpdf(x, model.means, model.variances)[0]))


# ---------------------------------------------------------------------------
# Beta density / CDF
# ---------------------------------------------------------------------------

def _check_beta_args(alpha: float, beta: float):
    if not (alpha > 0 and beta > 0):
        raise DataError(f"beta distribution requires alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}")


def beta_log_norm(alpha: float, beta: float) -> float:
    """log B(alpha, beta) = lgamma(alpha) + lgamma(beta) - lgamma(alpha + beta)."""
    return math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)


def beta_logpdf(x: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = (alpha - 1.0) * np.log(x) + (beta - 1.0) * np.log1p(-x) - beta_log_norm(alpha, beta)
    return lp


def beta_pdf(x, alpha: float, beta: float):
    """Density x^(a-1) (1-x)^(b-1) / B(a, b) on [0, 1], endpoints included."""
    _check_beta_args(alpha, beta)
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        raise DataError("beta_pdf is defined on [0, 1]")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    inner = (x > 0) & (x < 1)
    out = np.zeros_like(x)
    out[inner] = np.exp(beta_logpdf(x[inner], alpha, beta))
    # Exact endpoint values: finite only when the exponent there is zero.
    norm = math.exp(-beta_log_norm(alpha, beta))
    out[x == 0] = norm if alpha == 1.0 else (np.inf if alpha < 1.0 else 0.0)
    out[x == 1] = norm if beta == 1.0 else (np.inf if beta < 1.0 else 0.0)
    return float(out[0]) if scalar else out


def _beta_contfrac(a, b, x, max_iter: int = 300, eps: float = 3e-14):
    """Continued fraction for the incomplete beta (modified Lentz), vectorized."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < tiny, tiny, d)
    d = 1.0 / d
    h = d.copy()
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        coef = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coef * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + coef / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        h *= d * c
        coef = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coef * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + coef / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        h *= delta
        if np.all(np.abs(delta - 1.0) < eps):
            break
    return h


def beta_cdf(x, alpha: float, beta: float):
    """Regularized incomplete beta I_x(alpha, beta), continued-fraction evaluation."""
    _check_beta_args(alpha, beta)
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        raise DataError("beta_cdf is defined on [0, 1]")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    out = np.empty_like(x)
    out[x == 0] = 0.0
    out[x == 1] = 1.0
    inner = (x > 0) & (x < 1)
    if inner.any():
        xi = x[inner]
        # Use the symmetric form on whichever side the continued fraction converges fast.
        swap = xi > (alpha + 1.0) / (alpha + beta + 2.0)
        a = np.where(swap, beta, alpha)
        b = np.where(swap, alpha, beta)
        xx = np.where(swap, 1.0 - xi, xi)
        ln_front = a * np.log(xx) + b * np.log1p(-xx) - beta_log_norm(alpha, beta)
        frac = np.exp(ln_front) * _beta_contfrac(a, b, xx) / a
        out[inner] = np.where(swap, 1.0 - frac, frac)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def beta_from_moments(mean: float, var: float) -> tuple[float, float]:
    """Method-of-moments Beta parameters, clamped to a sane range."""
    mean = min(max(mean, 1e-12), 1.0 - 1e-12)
    var = max(var, 1e-10)
    t = mean * (1.0 - mean) / var - 1.0
    alpha = mean * t
    beta = (1.0 - mean) * t
    clamp = lambda v: float(min(max(v, BETA_PARAM_MIN), BETA_PARAM_MAX))
    return clamp(alpha), clamp(beta)


# ---------------------------------------------------------------------------
# Beta mixture (two components, modified EM)
# ---------------------------------------------------------------------------

@dataclass
class BetaMixture:
    """Component 0 models the background, component 1 the damage
    (mean of component 1 >= mean of component 0 by construction)."""

    weights: np.ndarray   # (2,)
    alphas: np.ndarray    # (2,)
    betas: np.ndarray     # (2,)
    responsibilities: np.ndarray  # (n, 2), clamp overrides applied
    log_likelihoods: list[float] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    n_iter: int = 0

    def component_means(self) -> np.ndarray:
        return self.alphas / (self.alphas + self.betas)


# Values are pulled this far inside (0, 1) before density evaluation so that
# exact 0/1 samples (always present after min-max normalization) stay finite.
_BETA_FIT_CLIP = 1e-6
_BACKGROUND_MASS = 0.9


def _beta_estep(x: np.ndarray, weights, alphas, betas) -> tuple[np.ndarray, float]:
    logr = np.stack([
        np.log(max(weights[0], 1e-300)) + beta_logpdf(x, alphas[0], betas[0]),
        np.log(max(weights[1], 1e-300)) + beta_logpdf(x, alphas[1], betas[1]),
    ], axis=1)
    norm = _logsumexp(logr, axis=1)
    ll = float(norm.sum())
    resp = np.exp(logr - norm[:, None])
    # Hard overrides: the background absorbs everything inside its lower 90%
    # mass; the damage component absorbs everything above its own mean. The
    # damage override is applied last so it wins any overlap.
    bg_hard = beta_cdf(x, alphas[0], betas[0]) <= _BACKGROUND_MASS
    resp[bg_hard, 0] = 1.0
    resp[bg_hard, 1] = 0.0
    dmg_hard = x > alphas[1] / (alphas[1] + betas[1])
    resp[dmg_hard, 0] = 0.0
    resp[dmg_hard, 1] = 1.0
    return resp, ll


def fit_beta_mixture(values: np.ndarray, seed: int = 0, max_iter: int = EM_MAX_ITER,
                     tol: float = EM_REL_TOL) -> BetaMixture:
    """Fit the two-component Beta mixture to values in [0, 1]."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if np.any((x < 0) | (x > 1)):
        raise DataError("beta mixture values must lie in [0, 1]")
    if x.size < 4:
        raise DataError(f"need at least 4 values to fit a beta mixture, got {x.size}")
    x = np.clip(x, _BETA_FIT_CLIP, 1.0 - _BETA_FIT_CLIP)

    centers, labels = kmeans_1d(x, 2, seed)
    lo_cluster = int(np.argmin(centers))
    weights = np.empty(2)
    alphas = np.empty(2)
    betas = np.empty(2)
    for comp, cluster in ((0, lo_cluster), (1, 1 - lo_cluster)):
        sel = labels == cluster
        weights[comp] = max(sel.mean(), 1e-6)
        mean = x[sel].mean() if sel.any() else x.mean()
        var = x[sel].var() if sel.any() else x.var()
        alphas[comp], betas[comp] = beta_from_moments(mean, var)
    weights /= weights.sum()

    lls: list[float] = []
    history: list[dict] = []
    resp, _ = _beta_estep(x, weights, alphas, betas)
    for it in range(max_iter):
        resp, ll = _beta_estep(x, weights, alphas, betas)
        lls.append(ll)
        nk = resp.sum(axis=0)
        weights = np.clip(nk / x.size, 1e-12, None)
        weights /= weights.sum()
        for comp in (0, 1):
            wsum = max(nk[comp], 1e-12)
            mean = float((resp[:, comp] * x).sum() / wsum)
            var = float((resp[:, comp] * (x - mean) ** 2).sum() / wsum)
            alphas[comp], betas[comp] = beta_from_moments(mean, var)
        means = alphas / (alphas + betas)
        if means[1] < means[0]:  # keep component 1 the high-mean (damage) one
            alphas, betas = alphas[::-1].copy(), betas[::-1].copy()
            weights = weights[::-1].copy()
            resp = resp[:, ::-1].copy()
        history.append({"weights": weights.copy(), "alphas": alphas.copy(),
                        "betas": betas.copy(), "means": (alphas / (alphas + betas)).copy()})
        if len(lls) > 1 and abs(lls[-1] - lls[-2]) <= tol * abs(lls[-2]):
            break
    resp, _ = _beta_estep(x, weights, alphas, betas)
    return BetaMixture(weights=weights, alphas=alphas, betas=betas, responsibilities=resp,
                       log_likelihoods=lls, history=history, n_iter=len(lls))
