"""Weight container: an exchange format for trained network parameters.

Binary layout (all integers little-endian, payloads little-endian float32):

    magic    4 bytes  b"LRPW"
    version  u16      currently 1
    mlen     u32      manifest byte length
    manifest mlen bytes of UTF-8 JSON (canonical: sorted keys, no spaces)
    count    u32      number of tensor records
    records, sorted by name:
        nlen     u16      name byte length
        name     nlen bytes UTF-8
        rank     u8
        dims     rank x u32
        payload  prod(dims) x f32

The manifest carries the architecture variant, per-channel input
normalization constants, the per-channel value bounds of the normalized
input (used by the first-layer relevance rule), and which logit index means
"damage". See docs/weight_format.md for the full schema.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import network
from .errors import WeightFormatError, WeightValidationError
from .network import Architecture, ConvSpec, LinearSpec

MAGIC = b"LRPW"
VERSION = 1


@dataclass(frozen=True)
class Manifest:
    variant: str
    mean: tuple[float, ...] = (0.0, 0.0, 0.0)
    std: tuple[float, ...] = (1.0, 1.0, 1.0)
    low: tuple[float, ...] = (0.0, 0.0, 0.0)
    high: tuple[float, ...] = (1.0, 1.0, 1.0)
    damage_index: int = 0

    @staticmethod
    def identity(variant: str, channels: int = 3) -> "Manifest":
        """No normalization; raw [0, 1] inputs with matching bounds."""
        return Manifest(variant=variant, mean=(0.0,) * channels, std=(1.0,) * channels,
                        low=(0.0,) * channels, high=(1.0,) * channels)

    def to_json(self) -> str:
        doc = {
            "variant": self.variant,
            "normalization": {"mean": list(self.mean), "std": list(self.std)},
            "bounds": {"low": list(self.low), "high": list(self.high)},
            "damage_index": self.damage_index,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "Manifest":
        doc = json.loads(text)
        norm = doc.get("normalization", {})
        mean = tuple(norm.get("mean", (0.0, 0.0, 0.0)))
        std = tuple(norm.get("std", (1.0, 1.0, 1.0)))
        bounds = doc.get("bounds", {})
        low = tuple(bounds.get("low", (0.0,) * len(mean)))
        high = tuple(bounds.get("high", (1.0,) * len(mean)))
        return Manifest(
            variant=doc["variant"],
            mean=mean,
            std=std,
            low=low,
            high=high,
            damage_index=int(doc.get("damage_index", 0)),
        )


@dataclass
class WeightContainer:
    manifest: Manifest
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def serialize(container: WeightContainer) -> bytes:
    """Encode the container to bytes (records sorted by name)."""
    parts = [MAGIC, struct.pack("<H", VERSION)]
    mjson = container.manifest.to_json().encode("utf-8")
    parts.append(struct.pack("<I", len(mjson)))
    parts.append(mjson)
    names = sorted(container.tensors)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(container.tensors[name], dtype="<f4")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def save_weights(container: WeightContainer, path) -> None:
    from .imgio import atomic_write_bytes

    atomic_write_bytes(serialize(container), path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(f"truncated file while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what):
        return struct.unpack("<B", self.take(1, what))[0]

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def deserialize(data: bytes) -> WeightContainer:
    r = _Reader(data)
    magic = r.take(4, "magic header")
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic header {magic!r}, expected {MAGIC!r}")
    version = r.u16("version")
    if version != VERSION:
        raise WeightFormatError(f"unsupported container version {version}, expected {VERSION}")
    mlen = r.u32("manifest length")
    try:
        manifest = Manifest.from_json(r.take(mlen, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as e:
        raise WeightFormatError(f"invalid manifest: {e}") from None
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        nlen = r.u16("entry name length")
        name = r.take(nlen, "entry name").decode("utf-8")
        if name in tensors:
            raise WeightFormatError(f"duplicate entry '{name}'")
        rank = r.u8(f"rank of entry '{name}'")
        if not 1 <= rank <= 4:
            raise WeightFormatError(f"entry '{name}' has unsupported rank {rank}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of entry '{name}'"))
        n_items = int(np.prod(dims))
        payload = r.take(4 * n_items, f"payload of entry '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise WeightFormatError(f"{len(data) - r.pos} trailing bytes after the last entry")
    return WeightContainer(manifest=manifest, tensors=tensors)


def validate_container(container: WeightContainer, arch: Architecture) -> None:
    """Check that the container carries exactly the entries ``arch`` needs."""
    m = container.manifest
    channels = arch.input_shape[0]
    for name, vals in (("mean", m.mean), ("std", m.std), ("low", m.low), ("high", m.high)):
        if len(vals) != channels:
            raise WeightValidationError(f"manifest {name} has {len(vals)} entries, expected {channels}")
    for lo, hi in zip(m.low, m.high):
        if not lo < hi:
            raise WeightValidationError(f"manifest bounds must satisfy low < high, got low={lo}, high={hi}")
    if m.damage_index not in (0, 1):
        raise WeightValidationError(f"manifest damage_index must be 0 or 1, got {m.damage_index}")

    expected: dict[str, tuple[int, ...]] = {}
    for layer in arch.parameterized():
        if isinstance(layer, ConvSpec):
            expected[layer.name + ".weight"] = (layer.out_channels, layer.in_channels,
                                                layer.kernel_size, layer.kernel_size)
            expected[layer.name + ".bias"] = (layer.out_channels,)
        elif isinstance(layer, LinearSpec):
            expected[layer.name + ".weight"] = (layer.out_features, layer.in_features)
            expected[layer.name + ".bias"] = (layer.out_features,)
    for name, dims in expected.items():
        if name not in container.tensors:
            raise WeightValidationError(f"missing entry '{name}'")
        got = container.tensors[name].shape
        if tuple(got) != dims:
            raise WeightValidationError(f"entry '{name}' has dims {tuple(got)}, expected {dims}")
    extras = sorted(set(container.tensors) - set(expected))
    if extras:
        raise WeightValidationError(f"unexpected entries {extras} for variant '{arch.variant}'")
    for name, arr in container.tensors.items():
        if not np.isfinite(arr).all():
            raise WeightValidationError(f"entry '{name}' contains non-finite values")


def load_weights(path) -> WeightContainer:
    """Read and fully validate a container file."""
    with open(path, "rb") as f:
        container = deserialize(f.read())
    arch = network.architecture_for(container.manifest.variant)
    validate_container(container, arch)
    return container


def random_container(arch: Architecture, seed: int, manifest: Manifest | None = None,
                     scale: float = 1.0) -> WeightContainer:
    """He/Glorot-initialized weights for ``arch``, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for layer in arch.parameterized():
        if isinstance(layer, ConvSpec):
            fan_in = layer.in_channels * layer.kernel_size ** 2
            std = scale * np.sqrt(2.0 / fan_in)
            shape = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        else:
            std = scale * np.sqrt(2.0 / (layer.in_features + layer.out_features))
            shape = (layer.out_features, layer.in_features)
        tensors[layer.name + ".weight"] = rng.normal(0.0, std, size=shape).astype(np.float32)
        tensors[layer.name + ".bias"] = np.zeros(shape[0], dtype=np.float32)
    if manifest is None:
        manifest = Manifest.identity(arch.variant, arch.input_shape[0])
    return WeightContainer(manifest=manifest, tensors=tensors)
