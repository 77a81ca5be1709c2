"""Turn a pixel relevance map into a binary damage mask.

Three methods:

* ``simple``: iterative midpoint thresholding on the min-max normalized map
  (threshold converges to the average of the two class means);
* ``gmm``: 5x5 mean filter, then a 3-component Gaussian mixture over the
  scalar relevance values; the component that best explains the maximum
  value is the damage component and pixels with posterior > 0.5 are masked;
* ``bmm``: 5x5 mean filter, negative values clamped to zero, the smallest
  half of the values dropped (they can never be damage), the rest min-max
  normalized and fitted with the two-component Beta mixture; pixels with
  damage posterior > 0.5 are masked and dropped pixels score 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mixtures
from .errors import DataError, InsufficientDataError, ShapeError
from .lrp import RelevanceMap

METHODS = ("simple", "gmm", "bmm")

# segment_simple iteration controls
ISODATA_TOL = 1e-6
ISODATA_MAX_ITER = 100

BMM_MIN_RETAINED = 16


@dataclass
class SegmentationMask:
    """Boolean damage mask plus, for the mixture methods, a per-pixel score."""

    mask: np.ndarray                 # (h, w) bool
    method: str
    score: np.ndarray | None = None  # (h, w) float64 damage probability
    threshold: float | None = None   # simple method: converged threshold (normalized units)
    status: str = "ok"               # "ok" | "constant-input" | "fallback-simple"


def _values(source) -> np.ndarray:
    arr = source.values if isinstance(source, RelevanceMap) else np.asarray(source)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D relevance map, got shape {arr.shape}")
    return arr.astype(np.float64)


def mean_filter_5x5(source) -> np.ndarray:
    """5x5 box average with edge replication; smooths single-pixel spikes."""
    v = _values(source)
    if v.shape[0] < 5 or v.shape[1] < 5:
        raise ShapeError(f"mean_filter_5x5 needs at least a 5x5 map, got {v.shape}")
    padded = np.pad(v, 2, mode="edge")
    acc = np.zeros_like(v)
    for dy in range(5):
        for dx in range(5):
            acc += padded[dy:dy + v.shape[0], dx:dx + v.shape[1]]
    return acc / 25.0


def _normalize01(v: np.ndarray) -> np.ndarray | None:
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return None
    return (v - lo) / (hi - lo)


def isodata_threshold(values: np.ndarray, tol: float = ISODATA_TOL,
                      max_iter: int = ISODATA_MAX_ITER) -> float:
    """Iterate t <- (mean(v <= t) + mean(v > t)) / 2 from t0 = mean(v).

    ``values`` must already be normalized and non-constant.
    """
    t = float(values.mean())
    for _ in range(max_iter):
        below = values[values <= t]
        above = values[values > t]
        if above.size == 0:  # cannot happen for non-constant input, kept as a guard
            break
        t_new = 0.5 * (float(below.mean()) + float(above.mean()))
        done = abs(t_new - t) < tol
        t = t_new
        if done:
            break
    return t


def segment_simple(source) -> SegmentationMask:
    """Automatic midpoint thresholding of the normalized relevance map."""
    v = _values(source)
    norm = _normalize01(v)
    if norm is None:
        return SegmentationMask(mask=np.zeros(v.shape, dtype=bool), method="simple",
                                status="constant-input")
    t = isodata_threshold(norm)
    return SegmentationMask(mask=norm > t, method="simple", threshold=t)


def segment_gmm(source, seed: int = 0, smooth: bool = True) -> SegmentationMask:
    """Gaussian-mixture segmentation; score map is the damage posterior."""
    v = _values(source)
    if smooth:
        v = mean_filter_5x5(v)
    flat = v.ravel()
    if np.unique(flat).size < 3:
        raise DataError("gmm segmentation needs at least 3 distinct relevance values after filtering")
    model = mixtures.fit_gaussian_mixture(flat, n_components=3, seed=seed)
    damage = mixtures.damage_component(model, float(flat.max()))
    post = mixtures.gaussian_posteriors(model, flat)[:, damage].reshape(v.shape)
    return SegmentationMask(mask=post > 0.5, method="gmm", score=post)


def segment_bmm(source, seed: int = 0, smooth: bool = True) -> SegmentationMask:
    """Beta-mixture segmentation; dropped low-relevance pixels score 0."""
    v = _values(source)
    if smooth:
        v = mean_filter_5x5(v)
    flat = np.maximum(v.ravel(), 0.0)
    if flat.max() <= flat.min():
        return SegmentationMask(mask=np.zeros(v.shape, dtype=bool), method="bmm",
                                score=np.zeros(v.shape), status="constant-input")
    # Drop the floor(n/2) smallest values; stable sort breaks ties by pixel index.
    order = np.argsort(flat, kind="stable")
    retained_idx = order[flat.size // 2:]
    retained = flat[retained_idx]
    if retained.size < BMM_MIN_RETAINED:
        raise InsufficientDataError(
            f"only {retained.size} pixels retained after the 50% drop, need {BMM_MIN_RETAINED}"
        )
    norm = _normalize01(retained)
    score = np.zeros(flat.size, dtype=np.float64)
    if norm is None:
        # All retained values identical: no mixture to fit, fall back to
        # simple thresholding on the retained values.
        fallback = segment_simple(flat.reshape(v.shape))
        fallback.method = "bmm"
        fallback.status = "fallback-simple"
        fallback.score = fallback.mask.astype(np.float64)
        return fallback
    model = mixtures.fit_beta_mixture(norm, seed=seed)
    score[retained_idx] = model.responsibilities[:, 1]
    score = score.reshape(v.shape)
    return SegmentationMask(mask=score > 0.5, method="bmm", score=score)


def segment(source, method: str, seed: int = 0) -> SegmentationMask:
    if method == "simple":
        return segment_simple(source)
    if method == "gmm":
        return segment_gmm(source, seed=seed)
    if method == "bmm":
        return segment_bmm(source, seed=seed)
    raise DataError(f"unknown segmentation method '{method}' (known: {METHODS})")
