import numpy as np
import pytest

import oracles
from lrpseg import segmentation as seg
from lrpseg.errors import InsufficientDataError, ShapeError
from lrpseg.lrp import RelevanceMap


def as_map(values):
    return RelevanceMap(values=np.asarray(values, dtype=np.float64), target_class=0)


class TestMeanFilter:
    def test_constant_map_unchanged(self):
        v = np.full((8, 8), 3.25)
        np.testing.assert_allclose(seg.mean_filter_5x5(v), v)

    def test_central_spike_becomes_plateau(self):
        v = np.zeros((11, 11))
        v[5, 5] = 25.0
        out = seg.mean_filter_5x5(v)
        np.testing.assert_allclose(out[3:8, 3:8], 1.0)
        assert out[0, 0] == 0.0

    def test_matches_window_oracle(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=(9, 7))
        np.testing.assert_allclose(seg.mean_filter_5x5(v), oracles.mean_filter_5x5_direct(v),
                                   atol=1e-6)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            seg.mean_filter_5x5(np.zeros((4, 8)))


class TestSegmentSimple:
    def test_two_level_hand_iteration(self):
        # {0,0,0,10,10} normalizes to {0,0,0,1,1}; t0 = 0.4 -> means 0 and 1
        # -> t = 0.5, a fixed point. The mask picks the two large values.
        v = np.array([[0.0, 0.0, 0.0, 10.0, 10.0]])
        res = seg.segment_simple(as_map(v))
        assert res.threshold == pytest.approx(0.5)
        np.testing.assert_array_equal(res.mask, [[False, False, False, True, True]])

    def test_binary_map(self):
        v = np.array([[0.0, 1.0], [1.0, 0.0]])
        res = seg.segment_simple(v)
        assert res.threshold == pytest.approx(0.5)
        np.testing.assert_array_equal(res.mask, v == 1.0)

    def test_constant_map_warns_empty(self):
        res = seg.segment_simple(np.full((4, 4), 2.0))
        assert res.status == "constant-input"
        assert not res.mask.any()

    def test_affine_invariance_of_mask(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = rng.normal(size=(6, 6))
            a = rng.uniform(0.1, 10.0)
            b = rng.uniform(-5.0, 5.0)
            base = seg.segment_simple(v)
            scaled = seg.segment_simple(a * v + b)
            np.testing.assert_array_equal(base.mask, scaled.mask)

    def test_matches_fixed_point_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = rng.normal(size=rng.integers(5, 40))
            res = seg.segment_simple(v.reshape(1, -1))
            norm = (v - v.min()) / (v.max() - v.min())
            fixed = oracles.isodata_fixed_points(norm)
            assert fixed, "oracle found no consistent split"
            thresholds = np.asarray([t for t, _ in fixed])
            k = int(np.argmin(np.abs(thresholds - res.threshold)))
            t_oracle, split = fixed[k]
            assert res.threshold == pytest.approx(t_oracle, abs=1e-5)
            expected = norm > t_oracle
            np.testing.assert_array_equal(res.mask.ravel(), expected)


class TestSegmentGmm:
    def test_synthetic_three_population_draw(self):
        rng = np.random.default_rng(3)
        n = 100 * 100
        comp = rng.choice(3, size=n, p=[0.95, 0.04, 0.01])
        v = np.where(comp == 0, rng.normal(0.0, 0.01, n),
                     np.where(comp == 1, rng.normal(0.1, 0.02, n), rng.normal(0.8, 0.05, n)))
        res = seg.segment_gmm(v.reshape(100, 100), seed=0, smooth=False)
        captured = res.mask.ravel()[comp == 2]
        assert captured.mean() >= 0.95

    def test_mask_is_score_threshold(self):
        rng = np.random.default_rng(4)
        v = np.concatenate([rng.normal(0, 0.01, 500), rng.normal(0.6, 0.05, 30)])
        res = seg.segment_gmm(v.reshape(10, 53), seed=1, smooth=False)
        np.testing.assert_array_equal(res.mask, res.score > 0.5)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        v = rng.normal(size=(12, 12))
        r1 = seg.segment_gmm(v, seed=3)
        r2 = seg.segment_gmm(v, seed=3)
        np.testing.assert_array_equal(r1.mask, r2.mask)
        np.testing.assert_array_equal(r1.score, r2.score)


class TestSegmentBmm:
    def test_synthetic_two_beta_draw(self):
        rng = np.random.default_rng(6)
        n = 100 * 100
        origins = rng.uniform(size=n) < 0.10
        v = np.where(origins, rng.beta(8, 1.5, size=n), rng.beta(1.2, 8, size=n))
        res = seg.segment_bmm(v.reshape(100, 100), seed=0, smooth=False)
        # dropped pixels are all background draws, so only check the damage side
        assert res.mask.ravel()[origins].mean() >= 0.9
        np.testing.assert_array_equal(res.mask, res.score > 0.5)

    def test_zeros_and_ones_posterior_one_at_ones(self):
        v = np.zeros(400)
        v[:12] = 1.0
        res = seg.segment_bmm(v.reshape(20, 20), seed=0, smooth=False)
        assert np.all(res.score.ravel()[:12] == 1.0)
        assert np.all(res.mask.ravel()[:12])
        assert not res.mask.ravel()[12:].any()

    def test_dropped_pixels_score_zero(self):
        rng = np.random.default_rng(7)
        v = rng.uniform(0, 1, size=(16, 16))
        res = seg.segment_bmm(v, seed=0, smooth=False)
        order = np.argsort(v.ravel(), kind="stable")
        dropped = order[:v.size // 2]
        assert np.all(res.score.ravel()[dropped] == 0.0)
        assert not res.mask.ravel()[dropped].any()

    def test_too_few_retained(self):
        with pytest.raises(InsufficientDataError):
            seg.segment_bmm(np.random.default_rng(8).uniform(0, 1, (5, 5)), smooth=False)

    def test_all_identical_retained_falls_back(self):
        v = np.zeros((8, 8))
        v[:2, :] = 1.0  # exactly 16 ones retained alongside 16 zeros
        res = seg.segment_bmm(v, seed=0, smooth=False)
        assert res.status in ("ok", "fallback-simple")
        assert res.method == "bmm"

    def test_constant_map_status(self):
        res = seg.segment_bmm(np.zeros((10, 10)), seed=0, smooth=False)
        assert res.status == "constant-input"
        assert not res.mask.any()

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        v = rng.uniform(0, 1, size=(12, 12))
        r1 = seg.segment_bmm(v, seed=4)
        r2 = seg.segment_bmm(v, seed=4)
        np.testing.assert_array_equal(r1.mask, r2.mask)
        np.testing.assert_array_equal(r1.score, r2.score)


def test_segment_dispatch():
    rng = np.random.default_rng(10)
    v = rng.uniform(0, 1, size=(16, 16))
    for method in seg.METHODS:
        res = seg.segment(v, method, seed=1)
        assert res.method == method
        assert res.mask.shape == v.shape
        if method == "simple":
            assert res.score is None
        else:
            assert res.score is not None
