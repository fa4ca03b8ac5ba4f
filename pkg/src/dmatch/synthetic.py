"""Synthetic image pairs with exact ground truth.

Images are sampled from an analytic texture, so shifting by a non-integer
amount involves no resampling error.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Texture", "stereo_pair", "slanted_plane_pair", "flow_pair", "bench_instance"]


class Texture:
    """Sum of random oriented sinusoids, intensities roughly in [0, 1]."""

    def __init__(self, seed: int = 0, n_waves: int = 24, max_freq: float = 1.6):
        rng = np.random.default_rng(seed)
        self.freq = rng.uniform(0.15, max_freq, n_waves)
        self.angle = rng.uniform(0, np.pi, n_waves)
        self.phase = rng.uniform(0, 2 * np.pi, n_waves)
        self.amp = rng.uniform(0.5, 1.0, n_waves) / self.freq ** 0.5
        self.norm = 0.5 / np.sqrt(0.5 * np.sum(self.amp ** 2)) / 3.0

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        arg = self.freq * (np.cos(self.angle) * x + np.sin(self.angle) * y) + self.phase
        return np.clip(0.5 + self.norm * np.sum(self.amp * np.sin(arg), axis=-1), 0.0, 1.0)


def stereo_pair(disparity_fn, height: int, width: int, seed: int = 0):
    """Left/right images for a disparity defined on right-image coordinates.

    ``disparity_fn(x_right, y)`` returns the disparity seen at right pixel
    ``x_right``; the left image is the texture itself, so left pixel
    ``x`` appears in the right image at ``x - d``.
    """
    tex = Texture(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    left = tex(x, y)
    right = tex(x + disparity_fn(x, y), y)
    return left, right


def slanted_plane_pair(height: int, width: int, offset: float, slope_x: float,
                       slope_y: float = 0.0, seed: int = 0):
    """Pair for the plane ``d(x, y) = offset + slope_x * x + slope_y * y``
    in left coordinates; returns ``(left, right, ground_truth)``."""
    tex = Texture(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    left = tex(x, y)
    # right pixel xr sees left x with x - d(x) = xr
    xl = (x + offset + slope_y * y) / (1.0 - slope_x)
    right = tex(xl, y)
    gt = offset + slope_x * x + slope_y * y
    return left, right, gt


def flow_pair(height: int, width: int, u: float, v: float, seed: int = 0):
    """Second image is the first translated by ``(u, v)``."""
    tex = Texture(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    return tex(x, y), tex(x - u, y - v)


def bench_instance(size: int = 40, labels: int = 16, seed: int = 3, noise: float = 0.02):
    """Left/right images of a slanted background and two fronto-parallel
    boxes, disparities within ``[0, labels)``, with mild sensor noise."""
    rng = np.random.default_rng(seed)

    def disparity(x, y):
        d = 2.0 + 0.08 * x + 0.03 * y
        box1 = (np.abs(x - 0.35 * size) < 0.18 * size) & (np.abs(y - 0.4 * size) < 0.2 * size)
        box2 = (np.abs(x - 0.7 * size) < 0.12 * size) & (np.abs(y - 0.7 * size) < 0.15 * size)
        d = np.where(box1, labels - 4.0, d)
        d = np.where(box2, labels - 2.0, d)
        return np.clip(d, 0, labels - 1)

    left, right = stereo_pair(disparity, size, size, seed)
    left = np.clip(left + noise * rng.standard_normal(left.shape), 0, 1)
    right = np.clip(right + noise * rng.standard_normal(right.shape), 0, 1)
    return left, right
