"""File I/O helpers: PNG images, float dumps, atomic writes.

All writers go through a temp-file-plus-rename so partially written
artifacts never appear under their final name.
"""

from __future__ import annotations

import contextlib
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


@contextlib.contextmanager
def atomic_writer(path, mode: str = "w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def atomic_write_bytes(data: bytes, path) -> None:
    with atomic_writer(path, "wb") as f:
        f.write(data)


def load_image(path) -> np.ndarray:
    """Read an image as (1, 3, h, w) float32 in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1)[None, :, :, :])


def save_gray_png(values01: np.ndarray, path) -> None:
    """Write a [0, 1] float image as an 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(values01, dtype=np.float64), 0.0, 1.0)
    _save_png(Image.fromarray(np.round(arr * 255).astype(np.uint8), mode="L"), path)


def save_mask_png(mask: np.ndarray, path) -> None:
    _save_png(Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L"), path)


def load_mask_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128


def save_heatmap_png(values: np.ndarray, path) -> None:
    """Diverging render centered at zero: positive warm, negative cool."""
    v = np.asarray(values, dtype=np.float64)
    peak = np.abs(v).max()
    t = v / peak if peak > 0 else np.zeros_like(v)
    rgb = np.ones(v.shape + (3,), dtype=np.float64)
    pos, neg = t > 0, t < 0
    rgb[pos, 1] = 1.0 - t[pos]
    rgb[pos, 2] = 1.0 - t[pos]
    rgb[neg, 0] = 1.0 + t[neg]
    rgb[neg, 1] = 1.0 + t[neg]
    _save_png(Image.fromarray(np.round(rgb * 255).astype(np.uint8), mode="RGB"), path)


def _save_png(image: Image.Image, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        image.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def save_float_map(values: np.ndarray, path) -> None:
    """Authoritative float dump: little-endian float32 .npy."""
    arr = np.asarray(values, dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        with open(tmp, "wb") as f:
            np.save(f, arr)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def load_float_map(path) -> np.ndarray:
    arr = np.load(path)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D float map in {path}, got shape {arr.shape}")
    return arr.astype(np.float64)
