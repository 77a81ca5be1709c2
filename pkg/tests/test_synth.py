import numpy as np
import pytest

from lrpseg import synth
from lrpseg.synth import SceneSpec, generate, make_dataset


class TestGenerate:
    def test_no_crack_empty_mask(self):
        img, label, mask = generate(SceneSpec(seed=1, has_crack=False))
        assert label == synth.CLEAN_LABEL
        assert not mask.any()

    def test_deterministic(self):
        a = generate(SceneSpec(seed=99))
        b = generate(SceneSpec(seed=99))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]
        np.testing.assert_array_equal(a[2], b[2])

    def test_coverage_bounds_hold_for_1000_samples(self):
        fracs = []
        for seed in range(1000):
            _, _, mask = generate(SceneSpec(seed=seed, size=64))
            fracs.append(mask.mean())
        fracs = np.asarray(fracs)
        assert fracs.min() >= synth.COVERAGE_MIN
        assert fracs.max() <= synth.COVERAGE_MAX

    def test_label_matches_mask(self):
        for seed in range(20):
            has_crack = seed % 2 == 0
            _, label, mask = generate(SceneSpec(seed=seed, has_crack=has_crack))
            assert (label == synth.DAMAGE_LABEL) == mask.any()

    def test_image_shape_and_range(self):
        img, _, _ = generate(SceneSpec(seed=5, size=48))
        assert img.shape == (1, 3, 48, 48)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0
        np.testing.assert_array_equal(img[0, 0], img[0, 1])  # grayscale replicated

    def test_crack_darkens_surface(self):
        img, _, mask = generate(SceneSpec(seed=3))
        gray = img[0, 0]
        assert gray[mask].mean() < gray[~mask].mean()


class TestMakeDataset:
    def test_split_counts_60_20_20(self):
        ds = make_dataset(50, 50, seed=0, size=32)
        assert len(ds.train) == 60
        # val/test carry both flip copies: 20 originals -> 60 each
        assert len(ds.val) == 60
        assert len(ds.test) == 60

    def test_flip_augmentation_triples(self):
        ds = make_dataset(10, 10, seed=1, size=32)
        originals = [i for i in ds.val.ids if "_f" not in i]
        assert len(ds.val.ids) == 3 * len(originals)
        for sid in originals:
            assert f"{sid}_fh" in ds.val.ids
            assert f"{sid}_fv" in ds.val.ids

    def test_flipped_images_and_masks_consistent(self):
        ds = make_dataset(8, 8, seed=2, size=32)
        base = next(i for i in ds.test.ids if "_f" not in i and i.startswith("pos"))
        i0 = ds.test.ids.index(base)
        ih = ds.test.ids.index(base + "_fh")
        np.testing.assert_array_equal(ds.test.images[ih], np.flip(ds.test.images[i0], axis=2))
        np.testing.assert_array_equal(ds.masks[base + "_fh"], np.flip(ds.masks[base], axis=1))

    def test_no_id_in_two_splits(self):
        ds = make_dataset(20, 20, seed=3, size=32)
        seen = set()
        for ids in (ds.train.ids, ds.val.ids, ds.test.ids):
            stems = {i.split("_f")[0] for i in ids}
            assert not (stems & seen)
            seen |= stems

    def test_labels_correct_per_id(self):
        ds = make_dataset(6, 6, seed=4, size=32)
        for sset in (ds.train, ds.val, ds.test):
            for sid, label in zip(sset.ids, sset.labels):
                assert (label == synth.DAMAGE_LABEL) == sid.startswith("pos")
                assert (label == synth.DAMAGE_LABEL) == ds.masks[sid].any()

    def test_too_small_rejected(self):
        with pytest.raises(Exception):
            make_dataset(2, 50, seed=0)

    def test_deterministic(self):
        a = make_dataset(6, 6, seed=11, size=32)
        b = make_dataset(6, 6, seed=11, size=32)
        np.testing.assert_array_equal(a.train.images, b.train.images)
        assert a.test.ids == b.test.ids


class TestDiskRoundTrip:
    def test_save_load(self, tmp_path, small_dataset):
        synth.save_dataset(small_dataset, tmp_path)
        loaded = synth.load_dataset(tmp_path)
        assert loaded.train.ids == small_dataset.train.ids
        assert loaded.test.ids == small_dataset.test.ids
        np.testing.assert_array_equal(loaded.train.labels, small_dataset.train.labels)
        for sid in small_dataset.test.ids[:3]:
            np.testing.assert_array_equal(loaded.masks[sid], small_dataset.masks[sid])
        # 8-bit quantization: pixel error bounded by half a step
        np.testing.assert_allclose(loaded.train.images, small_dataset.train.images,
                                   atol=0.5 / 255 + 1e-6)

    def test_manifest_columns(self, tmp_path, small_dataset):
        synth.save_dataset(small_dataset, tmp_path)
        header = (tmp_path / "manifest.csv").read_text().splitlines()[0]
        assert header == "id,path,label,split"


def test_classifier_signal_beats_permutation_null(trained_toy):
    """The trained classifier must clear 0.5 by more than 3 sigma of the
    label-permutation null distribution."""
    from lrpseg import training as tr

    arch, container, ds = trained_toy
    preds = tr.predict(arch, container.tensors, ds.val.images)
    bacc, _, _ = tr.balanced_accuracy(ds.val.labels, preds)
    rng = np.random.default_rng(0)
    null = []
    for _ in range(200):
        null.append(tr.balanced_accuracy(rng.permutation(ds.val.labels), preds)[0])
    assert bacc > 0.5 + 3 * np.std(null)
