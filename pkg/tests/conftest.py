import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lrpseg import network, synth, training, weights


@pytest.fixture(scope="session")
def tiny_arch():
    """Small net with every layer kind; cheap enough for brute-force checks."""
    from lrpseg.network import Architecture, ConvSpec, FlattenSpec, LinearSpec, PoolSpec, ReluSpec

    return Architecture("custom", (2, 6, 6), (
        ConvSpec("conv1_1", 2, 3),
        ReluSpec(),
        PoolSpec(),
        FlattenSpec(),
        LinearSpec("fc", 27, 2),
    ))


@pytest.fixture(scope="session")
def small_dataset():
    """Tiny synthetic dataset shared by trainer/CLI tests."""
    return synth.make_dataset(12, 12, seed=5, size=32)


@pytest.fixture(scope="session")
def trained_toy():
    """A briefly trained toy classifier on a small high-contrast crack set."""
    scene = synth.SceneSpec(seed=0, width_range=(3.0, 4.0), contrast_range=(0.4, 0.6),
                            noise_amplitude=0.03, control_points=(3, 5))
    ds = synth.make_dataset(24, 24, seed=9, scene=scene)
    arch = network.toy()
    cfg = training.TrainConfig(learning_rate_head=0.003, learning_rate_conv=0.0003,
                               epochs=20, seed=3)
    container, history = training.train(arch, ds.train.images, ds.train.labels, cfg,
                                        val=(ds.val.images, ds.val.labels))
    return arch, container, ds
