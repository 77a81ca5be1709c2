"""Pixel-level segmentation metrics and precision-recall curves.

All metrics are computed over the damage class only. Precision-recall curves
pool the pixels of every supplied image (micro pooling) and sweep over the
distinct scores; a pixel counts as predicted-damage at threshold t when its
score is >= t. When the top threshold still contains false positives because
many pixels share the maximal score, the curve is flagged as saturated and
carries the terminal precision of that point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError


@dataclass(frozen=True)
class PixelConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(mask: np.ndarray, truth: np.ndarray) -> PixelConfusion:
    mask = np.asarray(mask, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if mask.shape != truth.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match truth shape {truth.shape}")
    tp = int(np.sum(mask & truth))
    fp = int(np.sum(mask & ~truth))
    fn = int(np.sum(~mask & truth))
    tn = int(np.sum(~mask & ~truth))
    return PixelConfusion(tp, fp, fn, tn)


def iou(conf: PixelConfusion) -> float | None:
    """Intersection over union of the damage pixels; None when undefined."""
    denom = conf.tp + conf.fp + conf.fn
    return conf.tp / denom if denom > 0 else None


def precision(conf: PixelConfusion) -> float | None:
    denom = conf.tp + conf.fp
    return conf.tp / denom if denom > 0 else None


def recall(conf: PixelConfusion) -> float | None:
    denom = conf.tp + conf.fn
    return conf.tp / denom if denom > 0 else None


@dataclass
class PrCurve:
    points: list[tuple[float, float, float]]  # (threshold, precision, recall), thresholds ascending
    no_skill: float
    saturated: bool = False
    terminal_precision: float | None = None

    def precisions(self) -> np.ndarray:
        return np.asarray([p for _, p, _ in self.points])

    def recalls(self) -> np.ndarray:
        return np.asarray([r for _, _, r in self.points])


def _pool(score_maps, truths) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(score_maps, np.ndarray):
        score_maps = [score_maps]
        truths = [truths]
    scores, labels = [], []
    for s, t in zip(score_maps, truths):
        s = np.asarray(s, dtype=np.float64)
        t = np.asarray(t, dtype=bool)
        if s.shape != t.shape:
            raise ShapeError(f"score shape {s.shape} does not match truth shape {t.shape}")
        scores.append(s.ravel())
        labels.append(t.ravel())
    return np.concatenate(scores), np.concatenate(labels)


def pr_curve(score_maps, truths) -> PrCurve:
    """Micro-pooled precision-recall curve over one or more score maps."""
    scores, labels = _pool(score_maps, truths)
    positives = int(labels.sum())
    if positives == 0:
        raise DataError("cannot build a precision-recall curve without any positive pixel")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    cum_tp = np.cumsum(labels[order].astype(np.int64))
    # Block boundaries: last occurrence of each distinct score in descending order.
    is_last = np.ones(s_sorted.size, dtype=bool)
    is_last[:-1] = s_sorted[:-1] != s_sorted[1:]
    ends = np.flatnonzero(is_last)
    points = []
    for end in ends:
        k = end + 1
        tp = int(cum_tp[end])
        points.append((float(s_sorted[end]), tp / k, tp / positives))
    points.reverse()  # ascending thresholds
    top_k = int(ends[0]) + 1          # pixels tied at the maximal score
    top_fp = top_k - int(cum_tp[ends[0]])
    saturated = top_fp > 0
    return PrCurve(points=points, no_skill=positives / labels.size,
                   saturated=saturated, terminal_precision=points[-1][1] if saturated else None)


def raw_lrp_scores(source) -> np.ndarray:
    """Min-max normalize a relevance map to [0, 1] for threshold sweeps."""
    values = source.values if hasattr(source, "values") else np.asarray(source)
    values = values.astype(np.float64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        raise DataError("cannot normalize a constant relevance map")
    return (values - lo) / (hi - lo)


def write_pr_csv(curve: PrCurve, path) -> None:
    from .imgio import atomic_writer

    with atomic_writer(path) as f:
        w = csv.writer(f)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve.points:
            w.writerow([f"{t:.10g}", f"{p:.10g}", f"{r:.10g}"])


def summary_table(rows: list[tuple[str, float | None, float | None, float | None]]) -> str:
    """Plain-text table with method / IoU / precision / recall columns."""
    out = [f"{'method':<10} {'IoU':>8} {'precision':>10} {'recall':>8}"]
    fmt = lambda v: f"{v:.3f}" if v is not None else "n/a"
    for name, i, p, r in rows:
        out.append(f"{name:<10} {fmt(i):>8} {fmt(p):>10} {fmt(r):>8}")
    return "\n".join(out)
