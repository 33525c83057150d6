"""Discrete measures and grayscale frames turned into mass distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllBlack, EmptyOutput, InputError, LengthMismatch, NegativeWeight, NotNormalized

SIMPLEX_TOL = 1e-8


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """Non-negative weights on a finite set of points in R^d.

    Arrays are copied on construction and marked read-only.
    """

    weights: np.ndarray
    support: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_mass", float(self.weights.sum()))

    def __len__(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.support.shape[1]

    def scaled(self, mass):
        """Return a copy rescaled to the given total mass."""
        return new_measure(self.weights * (mass / self.total_mass), self.support)


def new_measure(weights, support=None, require_simplex=False):
    """Validate ``weights``/``support`` and build a :class:`DiscreteMeasure`.

    ``support`` defaults to the integer positions ``0..n-1`` on a line.
    Zero-weight atoms are kept so indices stay aligned with cost matrices.
    """
    w = np.array(weights, dtype=np.float64, copy=True).reshape(-1)
    if w.size == 0:
        raise InputError("a measure needs at least one atom")
    if support is None:
        x = np.arange(w.size, dtype=np.float64)[:, None]
    else:
        x = np.array(support, dtype=np.float64, copy=True)
        if x.ndim == 1:
            x = x[:, None]
    if x.shape[0] != w.size:
        raise LengthMismatch(f"{w.size} weights but {x.shape[0]} support points")
    if not np.all(np.isfinite(w)):
        raise InputError("weights must be finite")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight {w.min():g}")
    if not np.any(w > 0):
        raise InputError("at least one weight must be positive")
    if require_simplex and abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise NotNormalized(f"weights sum to {w.sum():.12g}, expected 1")
    return DiscreteMeasure(_frozen(w), _frozen(x))


def as_weights(m):
    """Weights of a measure or array-like as a float vector."""
    if isinstance(m, DiscreteMeasure):
        return m.weights
    return np.asarray(m, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class FrameImage:
    """Grayscale frame with gray levels in [0, 1], row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64, copy=True)
        if px.ndim != 2 or px.size == 0:
            raise InputError(f"expected a non-empty 2-D pixel grid, got shape {px.shape}")
        if not np.all((px >= 0) & (px <= 1)):
            raise InputError("gray levels must lie in [0, 1]")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def pixel_grid(height, width):
    """(row, col) coordinates of every pixel in row-major order."""
    rows, cols = np.indices((height, width), dtype=np.float64)
    return np.column_stack([rows.ravel(), cols.ravel()])


def measure_from_image(img):
    """Normalized gray levels as a probability measure on the pixel grid.

    Brighter pixels carry more mass.
    """
    w = img.pixels.ravel()
    total = w.sum()
    if total <= 0:
        raise AllBlack("image has no bright pixels to normalize")
    return new_measure(w / total, pixel_grid(img.height, img.width))


def mean_pool(img, filter=2, stride=2):
    """Average-pool ``img`` with a square window.

    Output size per axis is ``(size - filter) // stride + 1``; trailing pixels
    that do not fill a window are dropped.
    """
    if filter < 1 or stride < 1:
        raise InputError("filter and stride must be positive")
    h, w = img.height, img.width
    oh = (h - filter) // stride + 1 if h >= filter else 0
    ow = (w - filter) // stride + 1 if w >= filter else 0
    if oh <= 0 or ow <= 0:
        raise EmptyOutput(f"pooling {h}x{w} with filter {filter} leaves no pixels")
    px = img.pixels
    out = np.zeros((oh, ow))
    for di in range(filter):
        for dj in range(filter):
            out += px[di : di + stride * (oh - 1) + 1 : stride, dj : dj + stride * (ow - 1) + 1 : stride]
    return FrameImage(out / (filter * filter))
