"""Network architectures, the traced forward pass, and classification.

Three built-in variants are supported:

* ``vgg_a_128n``: the classic 11-layer conv stack (all 3x3, stride 1, pad 1,
  a 2x2 max pool after each stage) followed by two hidden fully connected
  layers of 128 neurons and a 2-way output.
* ``vgg_a_one_fc``: the same conv stack wired straight into the 2-way output.
* ``toy``: a small two-block net for 64x64 inputs used for desk-scale
  experiments (see docs/weight_format.md for the exact shape).

The forward pass records every layer's input activation plus the argmax
indices of each pooling layer; that trace is what relevance propagation
consumes later.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError

if TYPE_CHECKING:  # pragma: no cover
    from .weights import WeightContainer

DAMAGE = "damage"
NO_DAMAGE = "no_damage"


@dataclass(frozen=True)
class ConvSpec:
    name: str
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    padding: int = 1


@dataclass(frozen=True)
class ReluSpec:
    pass


@dataclass(frozen=True)
class PoolSpec:
    pass


@dataclass(frozen=True)
class FlattenSpec:
    pass


@dataclass(frozen=True)
class LinearSpec:
    name: str
    in_features: int
    out_features: int


LayerSpec = Union[ConvSpec, ReluSpec, PoolSpec, FlattenSpec, LinearSpec]


@dataclass(frozen=True)
class Architecture:
    """Ordered layer stack plus the expected input shape (channels, h, w)."""

    variant: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    class_count: int = 2

    def parameterized(self) -> list[LayerSpec]:
        return [l for l in self.layers if isinstance(l, (ConvSpec, LinearSpec))]

    def layer_names(self) -> list[str]:
        return [l.name for l in self.parameterized()]

    def conv_names(self) -> list[str]:
        return [l.name for l in self.layers if isinstance(l, ConvSpec)]


def _vgg_conv_stack() -> list[LayerSpec]:
    stack: list[LayerSpec] = []
    plan = [  # (name, in, out, pool_after)
        ("conv1_1", 3, 64, True),
        ("conv2_1", 64, 128, True),
        ("conv3_1", 128, 256, False),
        ("conv3_2", 256, 256, True),
        ("conv4_1", 256, 512, False),
        ("conv4_2", 512, 512, True),
        ("conv5_1", 512, 512, False),
        ("conv5_2", 512, 512, True),
    ]
    for name, cin, cout, pool in plan:
        stack.append(ConvSpec(name, cin, cout))
        stack.append(ReluSpec())
        if pool:
            stack.append(PoolSpec())
    return stack


def vgg_a_128n() -> Architecture:
    layers = _vgg_conv_stack()
    layers.append(FlattenSpec())
    layers.append(LinearSpec("fc1", 512 * 7 * 7, 128))
    layers.append(ReluSpec())
    layers.append(LinearSpec("fc2", 128, 128))
    layers.append(ReluSpec())
    layers.append(LinearSpec("fc3", 128, 2))
    return Architecture("vgg_a_128n", (3, 224, 224), tuple(layers))


def vgg_a_one_fc() -> Architecture:
    layers = _vgg_conv_stack()
    layers.append(FlattenSpec())
    layers.append(LinearSpec("fc", 512 * 7 * 7, 2))
    return Architecture("vgg_a_one_fc", (3, 224, 224), tuple(layers))


def toy() -> Architecture:
    """Two conv blocks and one linear head; fixed 3x64x64 input."""
    layers: tuple[LayerSpec, ...] = (
        ConvSpec("conv1_1", 3, 8),
        ReluSpec(),
        PoolSpec(),
        ConvSpec("conv2_1", 8, 16),
        ReluSpec(),
        PoolSpec(),
        FlattenSpec(),
        LinearSpec("fc", 16 * 16 * 16, 2),
    )
    return Architecture("toy", (3, 64, 64), layers)


_FACTORIES = {"vgg_a_128n": vgg_a_128n, "vgg_a_one_fc": vgg_a_one_fc, "toy": toy}


def architecture_for(variant: str) -> Architecture:
    try:
        return _FACTORIES[variant]()
    except KeyError:
        raise ConfigError(f"unknown architecture variant '{variant}' (known: {sorted(_FACTORIES)})") from None


@dataclass
class ForwardTrace:
    """Record of one forward pass: each layer's input, pool argmaxes, logits."""

    arch: Architecture
    inputs: list[np.ndarray]
    pool_indices: dict[int, np.ndarray] = field(default_factory=dict)
    logits: np.ndarray = None
    damage_index: int = 0


def conv_params(weights: "WeightContainer", layer: ConvSpec) -> T.ConvParams:
    return T.ConvParams(
        kernel=weights.tensors[layer.name + ".weight"],
        bias=weights.tensors[layer.name + ".bias"],
        stride=layer.stride,
        padding=layer.padding,
    )


def apply_layer(layer: LayerSpec, x: np.ndarray, weights: "WeightContainer"):
    """Apply one layer; returns (output, pool_indices_or_None)."""
    if isinstance(layer, ConvSpec):
        return T.conv2d(x, conv_params(weights, layer)), None
    if isinstance(layer, ReluSpec):
        return T.relu(x), None
    if isinstance(layer, PoolSpec):
        pooled, idx = T.maxpool2x2(x)
        return pooled, idx
    if isinstance(layer, FlattenSpec):
        return x.reshape(-1), None
    if isinstance(layer, LinearSpec):
        return T.linear(x, weights.tensors[layer.name + ".weight"], weights.tensors[layer.name + ".bias"]), None
    raise ConfigError(f"unknown layer spec {layer!r}")


def normalize_image(image: np.ndarray, manifest) -> np.ndarray:
    mean = np.asarray(manifest.mean, dtype=np.float32).reshape(1, -1, 1, 1)
    std = np.asarray(manifest.std, dtype=np.float32).reshape(1, -1, 1, 1)
    return ((image - mean) / std).astype(np.float32)


def forward(arch: Architecture, weights: "WeightContainer", image: np.ndarray) -> ForwardTrace:
    """Run the network on one image and record the full trace."""
    image = np.asarray(image, dtype=np.float32)
    expected = (1,) + arch.input_shape
    if image.shape != expected:
        raise ShapeError(f"expected input of shape {expected} for variant '{arch.variant}', got {image.shape}")
    x = normalize_image(image, weights.manifest)
    trace = ForwardTrace(arch=arch, inputs=[], damage_index=weights.manifest.damage_index)
    for i, layer in enumerate(arch.layers):
        trace.inputs.append(x)
        x, idx = apply_layer(layer, x, weights)
        if idx is not None:
            trace.pool_indices[i] = idx
    trace.logits = np.asarray(x, dtype=np.float32)
    return trace


def classify(trace: ForwardTrace) -> tuple[str, np.ndarray]:
    """Binary decision from the trace logits; exact ties resolve to no_damage."""
    d = trace.damage_index
    logits = trace.logits
    label = DAMAGE if logits[d] > logits[1 - d] else NO_DAMAGE
    return label, logits
