"""Map trained checkpoints onto the engine's weight container.

Supported sources: a torch ``state_dict`` (or a checkpoint dict containing
one under ``state_dict``) whose conv/linear parameters appear in forward
order, e.g. torchvision-style ``features.N.*`` / ``classifier.N.*`` keys, or
already engine-named entries. Mapping is positional: the i-th conv weight in
the checkpoint becomes the i-th conv layer of the declared variant, and
likewise for linear layers. Every mismatch is collected and reported in one
shot before aborting, so fixing a broken export takes one round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .format import Container, serialize

# Expected entry shapes per architecture variant (out/in channel pairs for
# convs, out/in features for linears); mirrors docs/weight_format.md.
_VGG_CONVS = [("conv1_1", 64, 3), ("conv2_1", 128, 64), ("conv3_1", 256, 128),
              ("conv3_2", 256, 256), ("conv4_1", 512, 256), ("conv4_2", 512, 512),
              ("conv5_1", 512, 512), ("conv5_2", 512, 512)]

VARIANTS = {
    "vgg_a_128n": {
        "convs": _VGG_CONVS,
        "linears": [("fc1", 128, 25088), ("fc2", 128, 128), ("fc3", 2, 128)],
    },
    "vgg_a_one_fc": {
        "convs": _VGG_CONVS,
        "linears": [("fc", 2, 25088)],
    },
    "toy": {
        "convs": [("conv1_1", 8, 3), ("conv2_1", 16, 8)],
        "linears": [("fc", 2, 4096)],
    },
}


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-channel pixel statistics; pixel values are floats in [0, 1]."""

    mean: tuple[float, ...] = (0.0, 0.0, 0.0)
    std: tuple[float, ...] = (1.0, 1.0, 1.0)

    def bounds(self) -> tuple[list[float], list[float]]:
        low = [(0.0 - m) / s for m, s in zip(self.mean, self.std)]
        high = [(1.0 - m) / s for m, s in zip(self.mean, self.std)]
        return low, high


def _to_numpy(value) -> np.ndarray:
    if hasattr(value, "detach"):
        value = value.detach().cpu().numpy()
    return np.asarray(value, dtype=np.float32)


def _ordered_params(state_dict: dict) -> tuple[list, list]:
    """Split the checkpoint into conv and linear (weight, bias) pairs,
    preserving checkpoint order."""
    convs, linears = [], []
    for key in state_dict:
        if not key.endswith(".weight"):
            continue
        weight = _to_numpy(state_dict[key])
        bias_key = key[:-len(".weight")] + ".bias"
        if bias_key not in state_dict:
            raise ExportError(f"checkpoint entry '{key}' has no matching bias '{bias_key}'")
        bias = _to_numpy(state_dict[bias_key])
        if weight.ndim == 4:
            convs.append((key, weight, bias))
        elif weight.ndim == 2:
            linears.append((key, weight, bias))
        else:
            raise ExportError(f"checkpoint entry '{key}' has unsupported rank {weight.ndim}")
    return convs, linears


def map_state_dict(state_dict: dict, variant: str) -> dict[str, np.ndarray]:
    """Positionally map checkpoint parameters onto engine entry names.

    Raises ExportError listing every unmapped layer and dimension mismatch.
    """
    if variant not in VARIANTS:
        raise ExportError(f"unknown variant '{variant}' (known: {sorted(VARIANTS)})")
    if "state_dict" in state_dict and isinstance(state_dict["state_dict"], dict):
        state_dict = state_dict["state_dict"]
    spec = VARIANTS[variant]
    convs, linears = _ordered_params(state_dict)
    problems: list[str] = []
    tensors: dict[str, np.ndarray] = {}

    for kind, found, expected, kshape in (
        ("conv", convs, spec["convs"], lambda out, inc: (out, inc, 3, 3)),
        ("linear", linears, spec["linears"], lambda out, inc: (out, inc)),
    ):
        if len(found) != len(expected):
            problems.append(f"expected {len(expected)} {kind} layers for '{variant}', "
                            f"checkpoint has {len(found)}")
        for (src_key, weight, bias), (name, out, inc) in zip(found, expected):
            want = kshape(out, inc)
            if tuple(weight.shape) != want:
                problems.append(f"layer '{name}' (from '{src_key}'): weight dims "
                                f"{tuple(weight.shape)} do not match expected {want}")
                continue
            if bias.shape != (out,):
                problems.append(f"layer '{name}' (from '{src_key}'): bias dims "
                                f"{tuple(bias.shape)} do not match expected ({out},)")
                continue
            tensors[name + ".weight"] = weight
            tensors[name + ".bias"] = bias
    if problems:
        raise ExportError("cannot map checkpoint onto variant "
                          f"'{variant}':\n  - " + "\n  - ".join(problems))
    return tensors


def export(state_dict: dict, variant: str, norm: NormalizationSpec | None = None,
           damage_index: int = 0) -> bytes:
    """Serialized container bytes for the given checkpoint."""
    norm = norm or NormalizationSpec()
    tensors = map_state_dict(state_dict, variant)
    low, high = norm.bounds()
    manifest = {
        "variant": variant,
        "normalization": {"mean": list(norm.mean), "std": list(norm.std)},
        "bounds": {"low": low, "high": high},
        "damage_index": damage_index,
    }
    return serialize(Container(manifest=manifest, tensors=tensors))


def export_file(checkpoint_path, out_path, variant: str,
                norm: NormalizationSpec | None = None, damage_index: int = 0) -> None:
    import torch

    state = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    data = export(state, variant, norm=norm, damage_index=damage_index)
    import os
    import tempfile
    out_dir = os.path.dirname(os.path.abspath(out_path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, out_path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
