"""Backward relevance propagation through a recorded forward trace.

The engine walks the layer stack in reverse, starting from the logit of the
target class, and redistributes relevance layer by layer until it reaches the
input pixels. How a conv or linear layer splits its output relevance across
its inputs is governed by a per-layer rule:

* ``zero``      R_i = sum_j  a_i w_ij / z_j * R_j          with z_j = sum_i a_i w_ij + b_j
* ``epsilon``   as zero, but z_j is stabilized by sign(z_j) * eps_scale * std(z)
* ``gamma``     as zero, with w and b replaced by w + gamma * max(w, 0)
* ``alphabeta`` positive and negative contributions are normalized separately
                and weighted alpha / -beta (alpha - beta = 1)
* ``zb``        first-layer rule for real-valued pixel inputs bounded by
                [low, high] per channel: contributions x w - low max(w,0) - high min(w,0)

Pooling layers route relevance winner-take-all to the recorded argmax
positions, flatten layers reshape it, and relu layers pass it through. All
relevance arithmetic runs in float64; every rule is linear in the upstream
relevance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .network import Architecture, ConvSpec, FlattenSpec, ForwardTrace, LinearSpec, PoolSpec, ReluSpec
from .weights import WeightContainer

RULES = ("zero", "epsilon", "gamma", "alphabeta", "zb")

# Denominators with |z| below this get a signed nudge instead of dividing by ~0.
_GUARD = 1e-9


@dataclass(frozen=True)
class RuleConfig:
    """One propagation rule plus its parameters."""

    rule: str
    epsilon_scale: float = 0.25
    gamma: float = 0.25
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigError(f"unknown relevance rule '{self.rule}' (known: {RULES})")
        # epsilon_scale = 0 is allowed: it reduces the epsilon rule to the zero rule.
        if self.epsilon_scale < 0:
            raise ConfigError(f"epsilon_scale must be >= 0, got {self.epsilon_scale}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.rule == "alphabeta" and abs(self.alpha - self.beta - 1.0) > 1e-12:
            raise ConfigError(f"alphabeta requires alpha - beta = 1, got alpha={self.alpha}, beta={self.beta}")


@dataclass
class RuleAssignment:
    """Mapping from parameterized layer name to its RuleConfig."""

    rules: dict[str, RuleConfig] = field(default_factory=dict)

    def for_layer(self, name: str) -> RuleConfig:
        try:
            return self.rules[name]
        except KeyError:
            raise ConfigError(f"no relevance rule assigned to layer '{name}'") from None

    def validate(self, arch: Architecture) -> None:
        missing = [n for n in arch.layer_names() if n not in self.rules]
        if missing:
            raise ConfigError(f"rule assignment covers no rule for layers {missing}")

    def to_text(self) -> str:
        lines = []
        for name, cfg in self.rules.items():
            if cfg.rule == "epsilon":
                params = f" {{epsilon_scale: {cfg.epsilon_scale}}}"
            elif cfg.rule == "gamma":
                params = f" {{gamma: {cfg.gamma}}}"
            elif cfg.rule == "alphabeta":
                params = f" {{alpha: {cfg.alpha}, beta: {cfg.beta}}}"
            else:
                params = ""
            lines.append(f"{name}: {cfg.rule}{params}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "RuleAssignment":
        rules: dict[str, RuleConfig] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = re.fullmatch(r"([\w.\-]+)\s*:\s*(\w+)\s*(\{.*\})?", line)
            if not m:
                raise ConfigError(f"cannot parse rule config line {lineno}: {raw!r}")
            name, rule, params = m.group(1), m.group(2), m.group(3)
            kwargs = {}
            if params:
                for item in params.strip("{} \t").split(","):
                    if not item.strip():
                        continue
                    if ":" not in item:
                        raise ConfigError(f"cannot parse rule parameter {item!r} on line {lineno}")
                    key, val = item.split(":", 1)
                    kwargs[key.strip()] = float(val)
            try:
                rules[name] = RuleConfig(rule=rule, **kwargs)
            except TypeError as e:
                raise ConfigError(f"bad rule parameters on line {lineno}: {e}") from None
        return RuleAssignment(rules)


# Table-driven presets for the VGG-A layer names; other architectures fall
# back to a depth-fraction heuristic so the same preset names apply everywhere.
_OURS_VGG = {
    "conv1_1": "zb",
    "conv2_1": "alphabeta", "conv3_1": "alphabeta",
    "conv3_2": "gamma", "conv4_1": "gamma", "conv4_2": "gamma", "conv5_1": "gamma", "conv5_2": "gamma",
}
_MONTAVON_VGG = {
    "conv1_1": "zb",
    "conv2_1": "gamma", "conv3_1": "gamma", "conv3_2": "gamma",
    "conv4_1": "epsilon", "conv4_2": "epsilon", "conv5_1": "epsilon", "conv5_2": "epsilon",
}

PRESETS = ("ours", "montavon")


def preset(name: str, arch: Architecture) -> RuleAssignment:
    """Build one of the two built-in rule sets for the given architecture."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (known: {PRESETS})")
    table = _OURS_VGG if name == "ours" else _MONTAVON_VGG
    linear_rule = "epsilon" if name == "ours" else "zero"
    conv_names = arch.conv_names()
    rules: dict[str, RuleConfig] = {}
    rest = conv_names[1:]
    for layer in arch.parameterized():
        if isinstance(layer, LinearSpec):
            rules[layer.name] = RuleConfig(linear_rule)
            continue
        if layer.name in table:
            rules[layer.name] = RuleConfig(table[layer.name])
        elif layer.name == conv_names[0]:
            rules[layer.name] = RuleConfig("zb")
        else:
            frac = rest.index(layer.name) / len(rest)
            if name == "ours":
                rules[layer.name] = RuleConfig("alphabeta" if frac < 0.25 else "gamma")
            else:
                rules[layer.name] = RuleConfig("gamma" if frac < 0.4 else "epsilon")
    return RuleAssignment(rules)


def resolve_assignment(spec: str, arch: Architecture) -> RuleAssignment:
    """Resolve a preset name or a rule-config file path and validate coverage."""
    if spec in PRESETS:
        assignment = preset(spec, arch)
    else:
        with open(spec, "r", encoding="utf-8") as f:
            assignment = RuleAssignment.from_text(f.read())
    assignment.validate(arch)
    return assignment


@dataclass
class RelevanceMap:
    """Channel-summed pixel relevance for one image and one target class."""

    values: np.ndarray  # (height, width), float64
    target_class: int
    image_id: str = ""


def _guard(z: np.ndarray) -> np.ndarray:
    return np.where(np.abs(z) < _GUARD, z + np.copysign(_GUARD, z), z)


def init_relevance(trace: ForwardTrace, target: int) -> np.ndarray:
    """Starting relevance: the target neuron keeps its logit, the rest get 0."""
    n = trace.arch.class_count
    if not 0 <= target < n:
        raise ConfigError(f"target class {target} out of range for {n} classes")
    rel = np.zeros(n, dtype=np.float64)
    rel[target] = float(trace.logits[target])
    return rel


def _rho(w: np.ndarray, b: np.ndarray, cfg: RuleConfig) -> tuple[np.ndarray, np.ndarray]:
    if cfg.rule == "gamma":
        return w + cfg.gamma * np.maximum(w, 0), b + cfg.gamma * np.maximum(b, 0)
    return w, b


def _stabilize(z: np.ndarray, cfg: RuleConfig) -> np.ndarray:
    if cfg.rule == "epsilon":
        z = z + np.copysign(cfg.epsilon_scale * z.std(), z)
    return _guard(z)


def lrp_linear(a: np.ndarray, weights: np.ndarray, bias: np.ndarray, rel: np.ndarray,
               cfg: RuleConfig) -> np.ndarray:
    """Redistribute relevance through an affine layer y = W a + b."""
    a = a.astype(np.float64)
    w = weights.astype(np.float64)
    b = bias.astype(np.float64)
    rel = rel.astype(np.float64)
    if cfg.rule == "alphabeta":
        ap, am = np.maximum(a, 0), np.minimum(a, 0)
        wp, wm = np.maximum(w, 0), np.minimum(w, 0)
        zp = wp @ ap + wm @ am + np.maximum(b, 0)
        zm = wm @ ap + wp @ am + np.minimum(b, 0)
        sp = cfg.alpha * rel / _guard(zp)
        sm = cfg.beta * rel / _guard(zm)
        return (ap * (wp.T @ sp) + am * (wm.T @ sp)) - (ap * (wm.T @ sm) + am * (wp.T @ sm))
    wr, br = _rho(w, b, cfg)
    z = _stabilize(wr @ a + br, cfg)
    s = rel / z
    return a * (wr.T @ s)


def lrp_conv(a: np.ndarray, params: T.ConvParams, rel: np.ndarray, cfg: RuleConfig) -> np.ndarray:
    """Conv-layer counterpart of :func:`lrp_linear` (shared-weight affine map)."""
    a = a.astype(np.float64)
    rel = rel.astype(np.float64)
    w = params.kernel.astype(np.float64)
    b = params.bias.astype(np.float64)
    hw = a.shape[2:]

    def bwd(s, kernel):
        return T.conv2d_input_grad(s, kernel, params.stride, params.padding, hw)

    if cfg.rule == "alphabeta":
        ap, am = np.maximum(a, 0), np.minimum(a, 0)
        wp, wm = np.maximum(w, 0), np.minimum(w, 0)
        zp = (T.conv2d_core(ap, wp, np.maximum(b, 0), params.stride, params.padding)
              + T.conv2d_core(am, wm, None, params.stride, params.padding))
        zm = (T.conv2d_core(ap, wm, np.minimum(b, 0), params.stride, params.padding)
              + T.conv2d_core(am, wp, None, params.stride, params.padding))
        sp = cfg.alpha * rel / _guard(zp)
        sm = cfg.beta * rel / _guard(zm)
        return (ap * bwd(sp, wp) + am * bwd(sp, wm)) - (ap * bwd(sm, wm) + am * bwd(sm, wp))
    wr, br = _rho(w, b, cfg)
    z = _stabilize(T.conv2d_core(a, wr, br, params.stride, params.padding), cfg)
    s = rel / z
    return a * bwd(s, wr)


def lrp_pool(indices: np.ndarray, rel: np.ndarray, input_shape) -> np.ndarray:
    """Winner-take-all routing: all relevance goes to the recorded argmax."""
    return T.pool_scatter(rel.astype(np.float64), indices, input_shape)


def lrp_zb(x: np.ndarray, params: T.ConvParams, low: np.ndarray, high: np.ndarray,
           rel: np.ndarray) -> np.ndarray:
    """First-layer rule for pixel inputs bounded per channel by [low, high].

    Contribution of pixel i to neuron j is x_i w_ij - low_i max(w_ij, 0)
    - high_i min(w_ij, 0); with x inside the bounds every contribution is
    non-negative, so relevance lands only on realizable pixel values.
    """
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if not np.all(low < high):
        raise ConfigError(f"zb rule requires low < high per channel, got low={low.tolist()}, high={high.tolist()}")
    x = x.astype(np.float64)
    rel = rel.astype(np.float64)
    w = params.kernel.astype(np.float64)
    wp, wm = np.maximum(w, 0), np.minimum(w, 0)
    lo = np.broadcast_to(low.reshape(1, -1, 1, 1), x.shape).astype(np.float64)
    hi = np.broadcast_to(high.reshape(1, -1, 1, 1), x.shape).astype(np.float64)
    z = (T.conv2d_core(x, w, None, params.stride, params.padding)
         - T.conv2d_core(lo, wp, None, params.stride, params.padding)
         - T.conv2d_core(hi, wm, None, params.stride, params.padding))
    s = rel / _guard(z)
    hw = x.shape[2:]
    return (x * T.conv2d_input_grad(s, w, params.stride, params.padding, hw)
            - lo * T.conv2d_input_grad(s, wp, params.stride, params.padding, hw)
            - hi * T.conv2d_input_grad(s, wm, params.stride, params.padding, hw))


def propagate(trace: ForwardTrace, weights: WeightContainer, assignment: RuleAssignment,
              target: int, image_id: str = "", start: np.ndarray | None = None,
              collect_layers: bool = False):
    """Propagate relevance from the target logit back to the input pixels.

    Returns a RelevanceMap whose values are the relevance summed over input
    channels. With ``collect_layers=True`` also returns the list of relevance
    arrays entering each layer, ordered from logits back to the input, which
    is what conservation checks consume. ``start`` overrides the default
    starting relevance vector (the target logit).
    """
    arch = trace.arch
    assignment.validate(arch)
    rel = init_relevance(trace, target) if start is None else np.asarray(start, dtype=np.float64)
    collected = [rel]
    first_conv = arch.conv_names()[0] if arch.conv_names() else None
    for i in reversed(range(len(arch.layers))):
        layer = arch.layers[i]
        a = trace.inputs[i]
        if isinstance(layer, LinearSpec):
            cfg = assignment.for_layer(layer.name)
            rel = lrp_linear(a, weights.tensors[layer.name + ".weight"],
                             weights.tensors[layer.name + ".bias"], rel, cfg)
        elif isinstance(layer, ConvSpec):
            cfg = assignment.for_layer(layer.name)
            params = T.ConvParams(weights.tensors[layer.name + ".weight"],
                                  weights.tensors[layer.name + ".bias"],
                                  layer.stride, layer.padding)
            if cfg.rule == "zb":
                if layer.name != first_conv:
                    raise ConfigError(f"zb rule is only valid for the first conv layer, not '{layer.name}'")
                rel = lrp_zb(a, params, weights.manifest.low, weights.manifest.high, rel)
            else:
                rel = lrp_conv(a, params, rel, cfg)
        elif isinstance(layer, PoolSpec):
            rel = lrp_pool(trace.pool_indices[i], rel, a.shape)
        elif isinstance(layer, FlattenSpec):
            rel = rel.reshape(a.shape)
        elif isinstance(layer, ReluSpec):
            pass
        collected.append(rel)
    pixel = rel.sum(axis=1)[0]  # sum over input channels -> (h, w)
    rmap = RelevanceMap(values=pixel, target_class=target, image_id=image_id)
    if collect_layers:
        return rmap, collected
    return rmap


def explain(trace: ForwardTrace, weights: WeightContainer, assignment: RuleAssignment,
            target: int | None = None, image_id: str = "") -> RelevanceMap:
    """Convenience wrapper: propagate for the damage class unless told otherwise."""
    if target is None:
        target = trace.damage_index
    return propagate(trace, weights, assignment, target, image_id=image_id)
