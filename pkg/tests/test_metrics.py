import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeqdm.encoding import ImageTensor
from eeqdm.metrics import (
    FeatureStats,
    frechet_distance,
    mse,
    pixel_feature_stats,
    psnr,
    ssim_global,
)
from eeqdm.qsim import StructureError


def img(pixels, width=None):
    pixels = np.asarray(pixels, dtype=float)
    return ImageTensor(width or pixels.size, pixels.size // (width or pixels.size), pixels)


def random_psd(rng, d):
    a = rng.normal(size=(d, d + 2))
    return a @ a.T / d


class TestMse:
    def test_identical(self):
        assert mse(img([0.1, 0.2]), img([0.1, 0.2])) == 0

    def test_zeros_vs_ones(self):
        assert mse(img(np.zeros(9)), img(np.ones(9))) == 1

    def test_arithmetic(self):
        assert mse(img([0, 0.5]), img([0.5, 0.5])) == 0.125

    def test_shape_mismatch(self):
        with pytest.raises(StructureError):
            mse(img([0, 1]), img([0, 1, 2]))


class TestSsim:
    def test_self_similarity_exact(self, rng):
        for _ in range(20):
            x = img(rng.uniform(0, 1, 64), 8)
            assert ssim_global(x, x) == 1.0

    def test_constant_black_vs_white(self):
        c1 = 0.01**2
        assert ssim_global(img(np.zeros(16)), img(np.ones(16))) == pytest.approx(c1 / (1 + c1), rel=1e-12)

    def test_symmetric(self, rng):
        for _ in range(20):
            a, b = img(rng.uniform(0, 1, 16)), img(rng.uniform(0, 1, 16))
            assert ssim_global(a, b) == ssim_global(b, a)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    def test_bounded(self, a, b):
        assert -1 - 1e-12 <= ssim_global(img(a), img(b)) <= 1 + 1e-12


class TestPsnr:
    def test_unit_mse(self):
        assert psnr(img([0.0]), img([1.0]), rescale=False) == 0.0

    def test_identical_cap(self):
        assert psnr(img([0.3, 0.1]), img([0.3, 0.1])) == 100.0

    def test_twenty_db(self):
        assert psnr(img([0.0]), img([0.1]), rescale=False) == pytest.approx(20.0, abs=1e-12)

    def test_decreasing_in_mse(self):
        values = [psnr(img([0.0]), img([d]), rescale=False) for d in (0.01, 0.1, 0.5, 1.0)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestFeatureStats:
    def test_identical_images_zero_covariance(self):
        s = pixel_feature_stats([img([0.2, 0.4]), img([0.2, 0.4])])
        np.testing.assert_array_equal(s.covariance, 0)

    def test_two_points(self):
        s = pixel_feature_stats([img([0, 0]), img([2, 2])])
        np.testing.assert_array_equal(s.mean, [1, 1])
        np.testing.assert_array_equal(s.covariance, [[2, 2], [2, 2]])

    def test_against_streaming(self, rng):
        images = [img(rng.uniform(0, 1, 6)) for _ in range(100)]
        # Welford's streaming update as the independent route
        mean = np.zeros(6)
        m2 = np.zeros((6, 6))
        for k, im in enumerate(images, 1):
            delta = im.pixels - mean
            mean += delta / k
            m2 += np.outer(delta, im.pixels - mean)
        s = pixel_feature_stats(images)
        np.testing.assert_allclose(s.mean, mean, atol=1e-14)
        np.testing.assert_allclose(s.covariance, m2 / 99, atol=1e-14)

    def test_needs_two(self):
        with pytest.raises(StructureError):
            pixel_feature_stats([img([1.0])])


def frechet_oracle(mu1, s1, mu2, s2, dps=40):
    """Extended-precision eigendecomposition of sqrt(S1) S2 sqrt(S1)."""
    with mpmath.workdps(dps):
        a, b = mpmath.matrix(s1.tolist()), mpmath.matrix(s2.tolist())
        w, v = mpmath.eigsy(a)
        root = v * mpmath.diag([mpmath.sqrt(max(x, 0)) for x in w]) * v.T
        inner = root * b * root
        inner = (inner + inner.T) / 2
        w2, _ = mpmath.eigsy(inner)
        tr = sum(mpmath.sqrt(max(x, 0)) for x in w2)
        diff = mpmath.matrix((mu1 - mu2).tolist())
        total = (diff.T * diff)[0] + sum(a[i, i] + b[i, i] for i in range(a.rows)) - 2 * tr
        return float(total)


class TestFrechet:
    def test_identical(self, rng):
        s = FeatureStats(rng.normal(size=4), random_psd(rng, 4), 10)
        assert frechet_distance(s, s) <= 1e-8

    def test_one_dimensional(self):
        a = FeatureStats([0.0], [[1.0]], 5)
        b = FeatureStats([1.0], [[1.0]], 5)
        assert frechet_distance(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_against_extended_precision(self, rng):
        for _ in range(5):
            mu1, mu2 = rng.normal(size=4), rng.normal(size=4)
            s1, s2 = random_psd(rng, 4), random_psd(rng, 4)
            got = frechet_distance(FeatureStats(mu1, s1, 10), FeatureStats(mu2, s2, 10))
            assert got == pytest.approx(frechet_oracle(mu1, s1, mu2, s2), abs=1e-6)

    def test_symmetric(self, rng):
        for _ in range(10):
            a = FeatureStats(rng.normal(size=5), random_psd(rng, 5), 10)
            b = FeatureStats(rng.normal(size=5), random_psd(rng, 5), 10)
            assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-6)

    def test_rank_deficient_self_distance(self, rng):
        images = [img(rng.uniform(0, 1, 64), 8) for _ in range(10)]
        s = pixel_feature_stats(images)
        assert frechet_distance(s, s) <= 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(StructureError):
            frechet_distance(FeatureStats([0.0], [[1.0]], 3), FeatureStats([0.0, 0.0], np.eye(2), 3))

    def test_non_finite(self):
        with pytest.raises(StructureError):
            FeatureStats([0.0], [[np.nan]], 3)
