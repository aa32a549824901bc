"""Tests for raster preprocessing."""

import unittest

import numpy as np

from pecl_lab.core.numeric import SeededRng
from pecl_lab.dataset.augment import (
    RasterAugmenter,
    augment,
    centre_offset,
    crop,
    hflip,
    vflip,
    zscore_bands,
)
from pecl_lab.exceptions import ConstantBandError, CropTooLargeError, ShapeMismatchError


class TestZscoreBands(unittest.TestCase):
    """Test cases for zscore_bands."""

    def test_two_values(self):
        out = zscore_bands(np.array([[[0.0, 2.0]]]))
        np.testing.assert_allclose(out, [[[-1.0, 1.0]]])

    def test_each_band_independent(self):
        rng = np.random.default_rng(0)
        raster = rng.normal(5.0, 3.0, (3, 8, 8)) * np.array([1.0, 10.0, 100.0])[:, None, None]
        out = zscore_bands(raster)
        np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=(1, 2)), 1.0)

    def test_idempotent(self):
        raster = np.random.default_rng(4).normal(3.0, 7.0, (4, 16, 16))
        once = zscore_bands(raster)
        np.testing.assert_allclose(zscore_bands(once), once, rtol=0.0, atol=1e-9)

    def test_constant_band_zeroed_with_warning(self):
        raster = np.stack([np.full((4, 4), 7.0), np.arange(16.0).reshape(4, 4)])
        with self.assertLogs("pecl_lab.dataset.augment", level="WARNING"):
            out = zscore_bands(raster)
        np.testing.assert_array_equal(out[0], 0.0)

    def test_constant_band_strict(self):
        with self.assertRaises(ConstantBandError):
            zscore_bands(np.ones((1, 3, 3)), strict=True)

    def test_rejects_wrong_rank(self):
        with self.assertRaises(ShapeMismatchError):
            zscore_bands(np.ones((3, 3)))


class TestCropsAndFlips(unittest.TestCase):
    """Test cases for flips, crops and augment."""

    def setUp(self):
        self.raster = np.arange(2 * 256 * 256, dtype=float).reshape(2, 256, 256)

    def test_centre_offset(self):
        self.assertEqual(centre_offset(self.raster.shape, (224, 224)), (16, 16))

    def test_evaluation_is_centre_crop(self):
        out = augment(self.raster, training=False)
        np.testing.assert_array_equal(out, self.raster[:, 16:240, 16:240])

    def test_flips_are_involutions(self):
        small = self.raster[:, :5, :7]
        np.testing.assert_array_equal(hflip(hflip(small)), small)
        np.testing.assert_array_equal(vflip(vflip(small)), small)
        np.testing.assert_array_equal(hflip(small)[:, :, 0], small[:, :, -1])
        np.testing.assert_array_equal(vflip(small)[:, 0, :], small[:, -1, :])

    def test_training_crop_shape_and_determinism(self):
        a = augment(self.raster, SeededRng(3), training=True)
        b = augment(self.raster, SeededRng(3), training=True)
        self.assertEqual(a.shape, (2, 224, 224))
        np.testing.assert_array_equal(a, b)

    def test_training_needs_rng(self):
        with self.assertRaises(ValueError):
            augment(self.raster, None, training=True)

    def test_crop_too_large(self):
        with self.assertRaises(CropTooLargeError):
            crop(self.raster[:, :100, :100], (0, 0), (224, 224))

    def test_full_size_crop_is_identity(self):
        small = self.raster[:, :10, :10]
        np.testing.assert_array_equal(augment(small, SeededRng(0), crop_to=(10, 10), training=False), small)


class TestRasterAugmenter(unittest.TestCase):
    """Test cases for RasterAugmenter on flattened rows."""

    def test_row_shapes(self):
        augmenter = RasterAugmenter((2, 6, 6), (4, 4))
        rows = np.random.default_rng(1).normal(size=(3, 72))
        out = augmenter(rows, SeededRng(0), training=True)
        self.assertEqual(out.shape, (3, augmenter.output_dim))
        self.assertEqual(augmenter.output_dim, 32)

    def test_rejects_wrong_width(self):
        augmenter = RasterAugmenter((2, 6, 6), (4, 4))
        with self.assertRaises(ShapeMismatchError):
            augmenter(np.zeros((1, 10)), training=False)


if __name__ == "__main__":
    unittest.main()
