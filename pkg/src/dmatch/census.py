"""Census transform, Hamming cost volumes and edge weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import CostVolume, FlowCostVolume2D, GridGraph
from .errors import DimensionError

__all__ = [
    "CensusField",
    "to_gray",
    "census_transform",
    "hamming_cost_volume",
    "flow_cost_volume",
    "edge_weights",
]


@dataclass
class CensusField:
    """Per-pixel census bitstrings packed into 64-bit words.

    Bit ``k`` (word ``k // 64``, position ``k % 64``) compares the ``k``-th
    window neighbour in raster order, centre skipped.
    """

    codes: np.ndarray  # (H, W, words) uint64
    nbits: int
    window: int

    @property
    def shape(self):
        return self.codes.shape[:2]

    def bits(self) -> np.ndarray:
        """Unpacked bits as a boolean array (H, W, nbits)."""
        k = np.arange(self.nbits)
        words = self.codes[..., k // 64]
        return ((words >> (k % 64).astype(np.uint64)) & np.uint64(1)).astype(bool)


def to_gray(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image[..., :3] @ np.array([0.299, 0.587, 0.114])
    return image


def census_transform(image, window: int = 5) -> CensusField:
    """Bit set iff the neighbour is strictly darker than the centre.

    Neighbours outside the image replicate the nearest edge pixel.
    """
    img = to_gray(image)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and at least 3, got {window}")
    H, W = img.shape
    if window > H or window > W:
        raise ValueError(f"window {window} larger than image {W}x{H}")
    r = window // 2
    padded = np.pad(img, r, mode="edge")
    nbits = window * window - 1
    codes = np.zeros((H, W, (nbits + 63) // 64), dtype=np.uint64)
    k = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[r + dy:r + dy + H, r + dx:r + dx + W]
            bit = (nb < img).astype(np.uint64) << np.uint64(k % 64)
            codes[..., k // 64] |= bit
            k += 1
    return CensusField(codes, nbits, window)


def _hamming(a, b):
    return np.bitwise_count(a ^ b).sum(axis=-1)


def _integer_shifts(values, what):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    shifts = np.round(values).astype(np.int64)
    if not np.allclose(shifts, values):
        raise ValueError(f"{what} must be integer pixel shifts")
    return values, shifts


def hamming_cost_volume(left: CensusField, right: CensusField, disparities) -> CostVolume:
    """``cost[y, x, k] = hamming(left[y, x], right[y, x - d_k])``.

    Samples falling outside the right image cost ``nbits / 2``.
    """
    if left.shape != right.shape or left.nbits != right.nbits:
        raise DimensionError("census fields differ in size")
    values, shifts = _integer_shifts(disparities, "disparities")
    H, W = left.shape
    cost = np.full((H, W, len(shifts)), left.nbits / 2.0, dtype=np.float32)
    for k, d in enumerate(shifts):
        lo, hi = max(0, d), min(W, W + d)
        if lo < hi:
            cost[:, lo:hi, k] = _hamming(left.codes[:, lo:hi], right.codes[:, lo - d:hi - d])
    return CostVolume(cost, values)


def flow_cost_volume(first: CensusField, second: CensusField, range1, range2) -> FlowCostVolume2D:
    """``D[y, x, a, b] = hamming(first[y, x], second[y + v_b, x + u_a])``
    for horizontal shifts ``range1`` and vertical shifts ``range2``."""
    if first.shape != second.shape or first.nbits != second.nbits:
        raise DimensionError("census fields differ in size")
    v1, s1 = _integer_shifts(range1, "flow range")
    v2, s2 = _integer_shifts(range2, "flow range")
    if len(s1) == 0 or len(s2) == 0:
        raise ValueError("flow ranges must be nonempty")
    H, W = first.shape
    cost = np.full((H, W, len(s1), len(s2)), first.nbits / 2.0, dtype=np.float32)
    for a, du in enumerate(s1):
        x0, x1 = max(0, -du), min(W, W - du)
        for b, dv in enumerate(s2):
            y0, y1 = max(0, -dv), min(H, H - dv)
            if x0 < x1 and y0 < y1:
                cost[y0:y1, x0:x1, a, b] = _hamming(
                    first.codes[y0:y1, x0:x1], second.codes[y0 + dv:y1 + dv, x0 + du:x1 + du])
    return FlowCostVolume2D(cost, v1, v2)


def edge_weights(image, graph: GridGraph, a: float = 5.0, b: float = 1.0,
                 w_min: float = 0.05) -> np.ndarray:
    """``w_ij = max(w_min, exp(-a * |I_i - I_j| ** b))`` for intensities in [0, 1]."""
    img = to_gray(image).ravel()
    if img.size != graph.n_pixels:
        raise DimensionError("image and graph sizes differ")
    diff = np.abs(img[graph.edges[:, 0]] - img[graph.edges[:, 1]])
    return np.clip(np.exp(-a * diff ** b), w_min, 1.0)
