"""Independent brute-force reference implementations used only by tests.

Everything here is deliberately written as plain nested loops over Python
floats (or the most naive vectorized form imaginable), so that agreement
with the production kernels is meaningful.
"""

from __future__ import annotations

import numpy as np


def conv2d_direct(x, kernel, bias, stride=1, padding=0):
    """Six-nested-loop convolution, float64 throughout."""
    b, c, h, w = x.shape
    oc, ic, kh, kw = kernel.shape
    assert c == ic
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((b, oc, oh, ow), dtype=np.float64)
    for bi in range(b):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = float(bias[o]) if bias is not None else 0.0
                    for ci in range(ic):
                        for ki in range(kh):
                            for kj in range(kw):
                                yy = i * stride + ki - padding
                                xx = j * stride + kj - padding
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += float(x[bi, ci, yy, xx]) * float(kernel[o, ci, ki, kj])
                    out[bi, o, i, j] = acc
    return out


def maxpool2x2_direct(x):
    """Per-window max scan; ties resolved to the lowest flat index."""
    b, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    pooled = np.zeros((b, c, oh, ow), dtype=np.float64)
    indices = np.zeros((b, c, oh, ow), dtype=np.int64)
    for bi in range(b):
        for ci in range(c):
            for i in range(oh):
                for j in range(ow):
                    best, best_idx = None, None
                    for dy in range(2):
                        for dx in range(2):
                            yy, xx = 2 * i + dy, 2 * j + dx
                            v = float(x[bi, ci, yy, xx])
                            flat = ((bi * c + ci) * h + yy) * w + xx
                            if best is None or v > best:
                                best, best_idx = v, flat
                    pooled[bi, ci, i, j] = best
                    indices[bi, ci, i, j] = best_idx
    return pooled, indices


def linear_direct(x, weights, bias):
    out = np.zeros(weights.shape[0], dtype=np.float64)
    for o in range(weights.shape[0]):
        acc = float(bias[o])
        for i in range(weights.shape[1]):
            acc += float(weights[o, i]) * float(x[i])
        out[o] = acc
    return out


def mean_filter_5x5_direct(v):
    """25-term window average with edge replication."""
    h, w = v.shape
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for dy in range(-2, 3):
                for dx in range(-2, 3):
                    yy = min(max(i + dy, 0), h - 1)
                    xx = min(max(j + dx, 0), w - 1)
                    acc += float(v[yy, xx])
            out[i, j] = acc / 25.0
    return out


def isodata_fixed_points(values):
    """All self-consistent splits of the sorted values.

    A split after sorted position k (1 <= k < n) is a fixed point of the
    midpoint iteration when t = (mean(low) + mean(high)) / 2 actually
    separates low and high, i.e. sorted[k-1] <= t < sorted[k].
    Returns a list of (threshold, k).
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    out = []
    for k in range(1, v.size):
        t = 0.5 * (v[:k].mean() + v[k:].mean())
        if v[k - 1] <= t < v[k]:
            out.append((float(t), k))
    return out


def pr_points_direct(scores, labels):
    """Confusion sweep: one point per distinct score, predicate score >= t."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    points = []
    for t in sorted(set(scores.tolist())):
        pred = scores >= t
        tp = int(np.sum(pred & labels))
        fp = int(np.sum(pred & ~labels))
        fn = int(np.sum(~pred & labels))
        points.append((t, tp / (tp + fp), tp / (tp + fn)))
    return points


def unrolled_conv_matrix(kernel, in_shape, stride, padding):
    """Explicit (out_dim, in_dim) matrix equal to the convolution map."""
    c, h, w = in_shape
    oc, ic, kh, kw = kernel.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    mat = np.zeros((oc * oh * ow, c * h * w), dtype=np.float64)
    for o in range(oc):
        for i in range(oh):
            for j in range(ow):
                row = (o * oh + i) * ow + j
                for ci in range(ic):
                    for ki in range(kh):
                        for kj in range(kw):
                            yy = i * stride + ki - padding
                            xx = j * stride + kj - padding
                            if 0 <= yy < h and 0 <= xx < w:
                                mat[row, (ci * h + yy) * w + xx] = kernel[o, ci, ki, kj]
    return mat, (oc, oh, ow)
