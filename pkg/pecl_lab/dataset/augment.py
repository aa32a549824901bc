"""Raster preprocessing: per-band z-scoring, random flips and crops."""

import logging
from typing import Optional, Tuple

import numpy as np

from ..exceptions import ConstantBandError, CropTooLargeError, ShapeMismatchError, NonFiniteValueError

logger = logging.getLogger(__name__)


def as_raster(values) -> np.ndarray:
    """A C x H x W float64 array with C >= 1 and finite values."""
    r = np.asarray(values, dtype=np.float64)
    if r.ndim != 3 or min(r.shape) < 1:
        raise ShapeMismatchError(f"raster must be C x H x W, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise NonFiniteValueError("raster contains NaN or Inf")
    return r


def zscore_bands(raster, strict: bool = False) -> np.ndarray:
    """Subtract each band's mean and divide by its population standard deviation.

    A constant band becomes all zeros with a warning (or raises when ``strict``).
    """
    r = as_raster(raster)
    out = np.empty_like(r)
    for c in range(r.shape[0]):
        band = r[c]
        sd = float(band.std())
        if sd == 0.0:
            if strict:
                raise ConstantBandError(f"band {c} is constant")
            logger.warning(f"{ConstantBandError.__name__}: band {c} is constant; set to zeros")
            out[c] = 0.0
        else:
            out[c] = (band - band.mean()) / sd
    return out


def hflip(raster) -> np.ndarray:
    return as_raster(raster)[:, :, ::-1].copy()


def vflip(raster) -> np.ndarray:
    return as_raster(raster)[:, ::-1, :].copy()


def _check_crop(shape, crop_to: Tuple[int, int]):
    h, w = crop_to
    if h < 1 or w < 1 or h > shape[1] or w > shape[2]:
        raise CropTooLargeError(f"cannot crop {shape[1]}x{shape[2]} raster to {h}x{w}")


def centre_offset(shape, crop_to: Tuple[int, int]) -> Tuple[int, int]:
    _check_crop(shape, crop_to)
    return (shape[1] - crop_to[0]) // 2, (shape[2] - crop_to[1]) // 2


def crop(raster, offset: Tuple[int, int], crop_to: Tuple[int, int]) -> np.ndarray:
    r = as_raster(raster)
    _check_crop(r.shape, crop_to)
    top, left = offset
    return r[:, top : top + crop_to[0], left : left + crop_to[1]].copy()


def augment(raster, rng=None, crop_to: Tuple[int, int] = (224, 224), training: bool = True) -> np.ndarray:
    """Training: independent 50% horizontal and vertical flips, then a uniform random crop.

    Evaluation (``training=False``) takes the exact centre crop and needs no rng.
    Draw order from ``rng``: horizontal flip, vertical flip, crop row, crop column.
    """
    r = as_raster(raster)
    _check_crop(r.shape, crop_to)
    if not training:
        return crop(r, centre_offset(r.shape, crop_to), crop_to)
    if rng is None:
        raise ValueError("training augmentation needs an rng")

    if rng.random() < 0.5:
        r = hflip(r)
    if rng.random() < 0.5:
        r = vflip(r)
    top = int(rng.integers(0, r.shape[1] - crop_to[0] + 1))
    left = int(rng.integers(0, r.shape[2] - crop_to[1] + 1))
    return crop(r, (top, left), crop_to)


class RasterAugmenter:
    """Applies raster preprocessing to feature rows that hold flattened C x H x W rasters."""

    def __init__(self, raster_shape: Tuple[int, int, int], crop_to: Tuple[int, int], zscore: bool = True):
        self.raster_shape = tuple(int(v) for v in raster_shape)
        self.crop_to = tuple(int(v) for v in crop_to)
        self.zscore = zscore
        _check_crop(self.raster_shape, self.crop_to)

    @property
    def output_dim(self) -> int:
        return self.raster_shape[0] * self.crop_to[0] * self.crop_to[1]

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.raster_shape))

    def __call__(self, features, rng=None, training: bool = True) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatchError(
                f"expected rows of {self.input_dim} values for raster {self.raster_shape}, got {x.shape}"
            )
        rows = []
        for row in x:
            raster = row.reshape(self.raster_shape)
            if self.zscore:
                raster = zscore_bands(raster)
            rows.append(augment(raster, rng, self.crop_to, training=training).ravel())
        return np.stack(rows)
