"""Synthetic crack images with image-level labels and pixel truth masks.

Each scene is a textured bright surface (low-frequency noise plus a gentle
brightness gradient) optionally scratched by a dark polyline crack. The
rasterized crack is the pixel truth mask; it exists purely for evaluation.
Crack pixels always cover between 0.5% and 8% of the image, mirroring the
small-defect regime the pipeline targets.

Everything is a pure function of the seed, so datasets are reproducible
bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

COVERAGE_MIN = 0.005
COVERAGE_MAX = 0.08

DAMAGE_LABEL = 0
CLEAN_LABEL = 1


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    size: int = 64
    has_crack: bool = True
    noise_amplitude: float = 0.06
    gradient_amplitude: float = 0.12
    control_points: tuple[int, int] = (3, 7)
    width_range: tuple[float, float] = (1.0, 4.0)
    contrast_range: tuple[float, float] = (0.1, 0.6)
    # Nuisance shading: probability of a soft dark blotch, drawn for both
    # classes alike so darkness alone cannot separate them.
    blotch_probability: float = 0.0


def _smooth_noise(rng: np.random.Generator, size: int, cells: int = 8) -> np.ndarray:
    coarse = rng.standard_normal((cells + 1, cells + 1))
    t = np.linspace(0.0, cells, size)
    i = np.clip(t.astype(int), 0, cells - 1)
    f = t - i
    rows = coarse[i, :] * (1 - f)[:, None] + coarse[i + 1, :] * f[:, None]
    return rows[:, i] * (1 - f)[None, :] + rows[:, i + 1] * f[None, :]


def _background(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    size = spec.size
    base = rng.uniform(0.55, 0.8)
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / size
    ramp = (ramp - ramp.mean()) * spec.gradient_amplitude
    noise = _smooth_noise(rng, size) * spec.noise_amplitude
    grain = rng.standard_normal((size, size)) * 0.01
    bg = base + ramp + noise + grain
    if rng.uniform() < spec.blotch_probability:
        cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
        ry, rx = rng.uniform(0.12 * size, 0.3 * size, size=2)
        depth = rng.uniform(0.08, 0.22)
        d2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        bg = bg - depth * np.exp(-d2)
    return np.clip(bg, 0.0, 1.0)


def _polyline(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    size = spec.size
    n_pts = int(rng.integers(spec.control_points[0], spec.control_points[1] + 1))
    theta = rng.uniform(0, np.pi)
    direction = np.array([np.sin(theta), np.cos(theta)])
    center = rng.uniform(0.3 * size, 0.7 * size, size=2)
    span = rng.uniform(0.6, 0.95) * size
    ts = np.linspace(-0.5, 0.5, n_pts)
    pts = center[None, :] + ts[:, None] * span * direction[None, :]
    jitter = rng.normal(0.0, 0.05 * size, size=(n_pts, 2))
    jitter[0] = jitter[-1] = 0.0
    pts = np.clip(pts + jitter, 1.0, size - 2.0)
    return pts


def _rasterize(pts: np.ndarray, width: float, size: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64),
                         indexing="ij")
    grid = np.stack([yy, xx], axis=-1)
    dmin = np.full((size, size), np.inf)
    for p, q in zip(pts[:-1], pts[1:]):
        seg = q - p
        seg_len2 = max(float(seg @ seg), 1e-12)
        rel = grid - p[None, None, :]
        t = np.clip((rel @ seg) / seg_len2, 0.0, 1.0)
        nearest = p[None, None, :] + t[..., None] * seg[None, None, :]
        d = np.sqrt(((grid - nearest) ** 2).sum(axis=-1))
        dmin = np.minimum(dmin, d)
    return dmin <= width / 2.0


def generate(spec: SceneSpec) -> tuple[np.ndarray, int, np.ndarray]:
    """Render one scene. Returns (image (1,3,s,s) float32, label, truth mask)."""
    rng = np.random.default_rng(spec.seed)
    bg = _background(rng, spec)
    size = spec.size
    if not spec.has_crack:
        img = np.repeat(bg[None, None, :, :], 3, axis=1).astype(np.float32)
        return img, CLEAN_LABEL, np.zeros((size, size), dtype=bool)
    mask = None
    for _ in range(10):
        pts = _polyline(rng, spec)
        width = rng.uniform(*spec.width_range)
        candidate = _rasterize(pts, width, size)
        cov = candidate.mean()
        if COVERAGE_MIN <= cov <= COVERAGE_MAX:
            mask = candidate
            break
    if mask is None:
        raise DataError(f"could not draw a crack with coverage in [{COVERAGE_MIN}, {COVERAGE_MAX}] "
                        f"after 10 attempts (seed {spec.seed})")
    contrast = rng.uniform(*spec.contrast_range)
    surface = np.clip(bg - contrast * mask, 0.0, 1.0)
    img = np.repeat(surface[None, None, :, :], 3, axis=1).astype(np.float32)
    return img, DAMAGE_LABEL, mask


@dataclass
class SampleSet:
    ids: list[str]
    images: np.ndarray           # (n, 3, s, s) float32
    labels: np.ndarray           # (n,) int64

    def __len__(self):
        return len(self.ids)


@dataclass
class SyntheticDataset:
    train: SampleSet
    val: SampleSet
    test: SampleSet
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    def all_ids(self) -> list[str]:
        return self.train.ids + self.val.ids + self.test.ids


def _augment_flips(ids, images, labels, masks):
    """Add horizontally and vertically flipped copies of every sample."""
    out_ids, out_imgs, out_labels = list(ids), [images], list(labels)
    for suffix, axis in (("_fh", 3), ("_fv", 2)):
        flipped = np.flip(images, axis=axis).copy()
        out_imgs.append(flipped)
        for i, base in enumerate(ids):
            out_ids.append(base + suffix)
            out_labels.append(labels[i])
            masks[base + suffix] = np.flip(masks[base], axis=axis - 2).copy()
    return out_ids, np.concatenate(out_imgs), np.asarray(out_labels, dtype=np.int64)


def make_dataset(n_pos: int, n_neg: int, seed: int, size: int | None = None,
                 scene: SceneSpec | None = None) -> SyntheticDataset:
    """Generate a labeled dataset with a stratified 60/20/20 split.

    Validation and test sets additionally carry a horizontally and a
    vertically flipped copy of each of their images (tripling their size).
    ``scene`` overrides the default crack/background parameters; ``size``
    overrides the image size (defaulting to the scene's own).
    """
    if n_pos < 5 or n_neg < 5:
        raise DataError(f"need at least 5 samples per class, got n_pos={n_pos}, n_neg={n_neg}")
    base = scene if scene is not None else SceneSpec(seed=0)
    size = base.size if size is None else size
    rng = np.random.default_rng(seed)
    sample_seeds = rng.integers(0, 2 ** 62, size=n_pos + n_neg)
    ids, images, labels = [], [], []
    masks: dict[str, np.ndarray] = {}
    for i in range(n_pos + n_neg):
        has_crack = i < n_pos
        sid = f"pos_{i:04d}" if has_crack else f"neg_{i - n_pos:04d}"
        img, label, mask = generate(replace(base, seed=int(sample_seeds[i]),
                                            size=size, has_crack=has_crack))
        ids.append(sid)
        images.append(img[0])
        labels.append(label)
        masks[sid] = mask
    images = np.stack(images)
    labels = np.asarray(labels, dtype=np.int64)

    split_of: dict[str, str] = {}
    for cls_sel in (labels == DAMAGE_LABEL, labels == CLEAN_LABEL):
        idx = np.flatnonzero(cls_sel)
        idx = idx[rng.permutation(idx.size)]
        n_train = round(0.6 * idx.size)
        n_val = round(0.2 * idx.size)
        for j, k in enumerate(idx):
            split = "train" if j < n_train else ("val" if j < n_train + n_val else "test")
            split_of[ids[k]] = split

    sets = {}
    for split in ("train", "val", "test"):
        sel = [i for i, sid in enumerate(ids) if split_of[sid] == split]
        split_ids = [ids[i] for i in sel]
        split_imgs = images[sel]
        split_labels = labels[sel]
        if split in ("val", "test"):
            split_ids, split_imgs, split_labels = _augment_flips(split_ids, split_imgs,
                                                                 split_labels, masks)
        sets[split] = SampleSet(ids=split_ids, images=split_imgs, labels=split_labels)
    return SyntheticDataset(train=sets["train"], val=sets["val"], test=sets["test"], masks=masks)


def save_dataset(ds: SyntheticDataset, out_dir) -> None:
    """Materialize the dataset: images/, masks/, and a manifest.csv."""
    from .imgio import atomic_writer, save_gray_png, save_mask_png

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for split, sset in (("train", ds.train), ("val", ds.val), ("test", ds.test)):
        for i, sid in enumerate(sset.ids):
            rel = f"images/{sid}.png"
            save_gray_png(sset.images[i][0], out / rel)
            save_mask_png(ds.masks[sid], out / "masks" / f"{sid}.png")
            rows.append((sid, rel, int(sset.labels[i]), split))
    with atomic_writer(out / "manifest.csv") as f:
        w = csv.writer(f)
        w.writerow(["id", "path", "label", "split"])
        w.writerows(rows)


def load_dataset(data_dir) -> SyntheticDataset:
    """Load a materialized dataset back from disk."""
    from .imgio import load_image, load_mask_png

    root = Path(data_dir)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise DataError(f"no manifest.csv in {root}")
    buckets = {"train": ([], [], []), "val": ([], [], []), "test": ([], [], [])}
    masks: dict[str, np.ndarray] = {}
    with open(manifest, newline="") as f:
        for row in csv.DictReader(f):
            sid, rel, label, split = row["id"], row["path"], int(row["label"]), row["split"]
            ids, imgs, labels = buckets[split]
            ids.append(sid)
            imgs.append(load_image(root / rel)[0])
            labels.append(label)
            mask_path = root / "masks" / f"{sid}.png"
            if mask_path.exists():
                masks[sid] = load_mask_png(mask_path)
    sets = {}
    for split, (ids, imgs, labels) in buckets.items():
        sets[split] = SampleSet(ids=ids, images=np.stack(imgs) if imgs else np.empty((0, 3, 1, 1), np.float32),
                                labels=np.asarray(labels, dtype=np.int64))
    return SyntheticDataset(train=sets["train"], val=sets["val"], test=sets["test"], masks=masks)
