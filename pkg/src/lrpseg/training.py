"""Desk-scale supervised training of the small architectures.

Plain SGD with momentum on softmax cross-entropy, with two learning-rate
groups: fully connected layers train at ``learning_rate_head`` and conv
layers at the (typically smaller) ``learning_rate_conv``. Gradients are
implemented directly against the tensor kernels, which makes them easy to
verify with finite differences.

Training touches image-level labels only; pixel masks never enter here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError
from .network import Architecture, ConvSpec, FlattenSpec, LinearSpec, PoolSpec, ReluSpec
from .weights import Manifest, WeightContainer, random_container


@dataclass(frozen=True)
class TrainConfig:
    learning_rate_head: float = 0.001
    learning_rate_conv: float = 0.0001
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate_head <= 0 or self.learning_rate_conv <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    balanced_accuracy: float


def balanced_accuracy(labels, predictions, positive: int = 0) -> tuple[float, float, float]:
    """(TPR + TNR) / 2, plus the two rates. ``positive`` is the damage index."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.size == 0:
        raise DataError("balanced accuracy of an empty label set is undefined")
    pos = y == positive
    if not pos.any() or pos.all():
        raise DataError("balanced accuracy needs both classes present in the labels")
    tpr = float(np.mean(p[pos] == positive))
    tnr = float(np.mean(p[~pos] != positive))
    return 0.5 * (tpr + tnr), tpr, tnr


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, (grad / n).astype(np.float32)


def forward_batch(arch: Architecture, tensors: dict, x: np.ndarray):
    """Batched forward pass; returns (logits, per-layer input cache)."""
    cache = []
    pool_idx = {}
    for i, layer in enumerate(arch.layers):
        cache.append(x)
        if isinstance(layer, ConvSpec):
            x = T.conv2d_core(x, tensors[layer.name + ".weight"], tensors[layer.name + ".bias"],
                              layer.stride, layer.padding)
        elif isinstance(layer, ReluSpec):
            x = T.relu(x)
        elif isinstance(layer, PoolSpec):
            x, idx = T.maxpool2x2(x)
            pool_idx[i] = idx
        elif isinstance(layer, FlattenSpec):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, LinearSpec):
            x = T.linear(x, tensors[layer.name + ".weight"], tensors[layer.name + ".bias"])
    return x, cache, pool_idx


def backward_batch(arch: Architecture, tensors: dict, cache, pool_idx, grad_logits: np.ndarray) -> dict:
    """Parameter gradients for one batch, as {entry name: float64 array}."""
    grads: dict[str, np.ndarray] = {}
    g = grad_logits
    for i in reversed(range(len(arch.layers))):
        layer = arch.layers[i]
        a = cache[i]
        if isinstance(layer, LinearSpec):
            w = tensors[layer.name + ".weight"]
            grads[layer.name + ".weight"] = g.astype(np.float64).T @ a.astype(np.float64)
            grads[layer.name + ".bias"] = g.astype(np.float64).sum(axis=0)
            g = (g.astype(np.float64) @ w.astype(np.float64)).astype(np.float32)
        elif isinstance(layer, FlattenSpec):
            g = g.reshape(a.shape)
        elif isinstance(layer, PoolSpec):
            g = T.pool_scatter(g, pool_idx[i], a.shape)
        elif isinstance(layer, ReluSpec):
            g = g * (a > 0)
        elif isinstance(layer, ConvSpec):
            kshape = tensors[layer.name + ".weight"].shape
            gk, gb = T.conv2d_param_grads(a, g, kshape, layer.stride, layer.padding)
            grads[layer.name + ".weight"] = gk
            grads[layer.name + ".bias"] = gb
            if i > 0:
                g = T.conv2d_input_grad(g, tensors[layer.name + ".weight"], layer.stride,
                                        layer.padding, a.shape[2:])
    return grads


def sgd_step(arch: Architecture, tensors: dict, velocity: dict, grads: dict, cfg: TrainConfig) -> None:
    conv_entries = {l.name for l in arch.layers if isinstance(l, ConvSpec)}
    for name, g in grads.items():
        lr = cfg.learning_rate_conv if name.split(".")[0] in conv_entries else cfg.learning_rate_head
        v = velocity.setdefault(name, np.zeros_like(tensors[name], dtype=np.float64))
        v *= cfg.momentum
        v -= lr * g
        tensors[name] = (tensors[name].astype(np.float64) + v).astype(np.float32)


def predict(arch: Architecture, tensors: dict, images: np.ndarray, chunk: int = 64) -> np.ndarray:
    preds = []
    for i in range(0, images.shape[0], chunk):
        logits, _, _ = forward_batch(arch, tensors, images[i:i + chunk])
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)


def train(arch: Architecture, images: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
          val: tuple[np.ndarray, np.ndarray] | None = None,
          manifest: Manifest | None = None) -> tuple[WeightContainer, list[EpochStats]]:
    """Train ``arch`` from scratch; returns the weight container and the log.

    ``images``: (n, c, h, w) float32 in [0, 1]; ``labels``: (n,) int class
    indices (0 = damage). Without an explicit validation set, a stratified
    20% split is held out for the per-epoch balanced accuracy.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ConfigError("training data must contain both classes")
    rng = np.random.default_rng(cfg.seed)
    if val is None:
        hold = []
        for c in classes:
            idx = np.flatnonzero(labels == c)
            idx = idx[rng.permutation(idx.size)]
            hold.extend(idx[:max(1, idx.size // 5)])
        hold = np.asarray(sorted(hold))
        keep = np.setdiff1d(np.arange(labels.size), hold)
        val = (images[hold], labels[hold])
        images, labels = images[keep], labels[keep]
    val_images, val_labels = val

    container = random_container(arch, seed=int(rng.integers(2 ** 31)), manifest=manifest)
    tensors = container.tensors
    velocity: dict[str, np.ndarray] = {}
    history: list[EpochStats] = []
    n = labels.size
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            logits, cache, pool_idx = forward_batch(arch, tensors, images[sel])
            loss, grad = softmax_cross_entropy(logits, labels[sel])
            grads = backward_batch(arch, tensors, cache, pool_idx, grad)
            sgd_step(arch, tensors, velocity, grads, cfg)
            losses.append(loss)
        preds = predict(arch, tensors, val_images)
        bacc, _, _ = balanced_accuracy(val_labels, preds)
        history.append(EpochStats(epoch=epoch, loss=float(np.mean(losses)), balanced_accuracy=bacc))
    return container, history


def write_training_log(history: list[EpochStats], path) -> None:
    from .imgio import atomic_writer

    with atomic_writer(path) as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "balanced_accuracy"])
        for row in history:
            w.writerow([row.epoch, f"{row.loss:.10g}", f"{row.balanced_accuracy:.10g}"])
