"""Standalone writer/reader for the `.lrpw` weight container.

Implements the byte layout documented in the engine's docs/weight_format.md:
little-endian throughout, canonical JSON manifest (sorted keys, no spaces),
tensor records sorted by name, float32 payloads. Kept independent of the
engine so this tool only touches the file-format boundary.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LRPW"
VERSION = 1


class FormatError(Exception):
    pass


@dataclass
class Container:
    manifest: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def serialize(container: Container) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    mjson = json.dumps(container.manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
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


def deserialize(data: bytes) -> Container:
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated file while reading {what}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic header")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (mlen,) = struct.unpack("<I", take(4, "manifest length"))
    manifest = json.loads(take(mlen, "manifest").decode("utf-8"))
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of '{name}'"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of '{name}'"))
        payload = take(4 * int(np.prod(dims)), f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if pos != len(data):
        raise FormatError("trailing bytes after the last entry")
    return Container(manifest=manifest, tensors=tensors)
