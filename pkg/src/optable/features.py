"""Channel stack, summed-area tables and the 14-element patch descriptor.

Planes are stored on exact integer grids (8-bit codes for R, G, B and a
1/4096 grid for H, S, V and Sobel), so the summed-area tables are integer
valued and every rectangle query is exact. Identical pixel content therefore
yields bit-identical descriptors wherever it sits in the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundsError
from .imaging import check_rgb, luminance, rgb_to_hsv_array, sobel_magnitude

PLANE_NAMES = ("R", "G", "B", "H", "S", "V", "sobel")
N_PLANES = len(PLANE_NAMES)
DESCRIPTOR_SIZE = 2 * N_PLANES
FINE_LEVELS = 4096
PLANE_SCALES = np.array([255, 255, 255] + [FINE_LEVELS] * 4, dtype=np.int64)

_INT64_SAFE = 2**62


@dataclass(frozen=True)
class PatchRect:
    x: int
    y: int
    size: int

    def check(self, width: int, height: int) -> None:
        if self.size < 1:
            raise BoundsError(f"patch size must be >= 1, got {self.size}")
        if self.x < 0 or self.y < 0 or self.x + self.size > width or self.y + self.size > height:
            raise BoundsError(f"{self} does not fit in a {width}x{height} image")


@dataclass(frozen=True)
class ChannelStack:
    """Seven [0, 1] planes in PLANE_NAMES order plus their integer codes."""

    codes: np.ndarray  # (7, H, W) int64

    @property
    def planes(self) -> np.ndarray:
        return self.codes / PLANE_SCALES[:, None, None]

    @property
    def height(self) -> int:
        return self.codes.shape[1]

    @property
    def width(self) -> int:
        return self.codes.shape[2]


def build_channel_stack(img: np.ndarray) -> ChannelStack:
    img = check_rgb(img)
    h, w = img.shape[:2]
    codes = np.empty((N_PLANES, h, w), dtype=np.int64)
    codes[:3] = np.moveaxis(img, 2, 0)
    hsv = rgb_to_hsv_array(img / 255.0)
    sob = sobel_magnitude(luminance(img))
    fine = np.concatenate([np.moveaxis(hsv, 2, 0), sob[None]], axis=0)
    codes[3:] = np.floor(np.clip(fine, 0.0, 1.0) * FINE_LEVELS + 0.5).astype(np.int64)
    return ChannelStack(codes)


@dataclass(frozen=True)
class IntegralStats:
    """Per-plane summed-area tables of x and x^2, shape (7, H+1, W+1)."""

    sums: np.ndarray
    sq_sums: np.ndarray

    @classmethod
    def from_stack(cls, stack: ChannelStack) -> "IntegralStats":
        c = stack.codes
        n, h, w = c.shape
        sums = np.zeros((n, h + 1, w + 1), dtype=np.int64)
        sq = np.zeros((n, h + 1, w + 1), dtype=np.int64)
        sums[:, 1:, 1:] = c.cumsum(axis=1).cumsum(axis=2)
        sq[:, 1:, 1:] = (c * c).cumsum(axis=1).cumsum(axis=2)
        return cls(sums, sq)

    @classmethod
    def from_image(cls, img: np.ndarray) -> "IntegralStats":
        return cls.from_stack(build_channel_stack(img))

    @property
    def height(self) -> int:
        return self.sums.shape[1] - 1

    @property
    def width(self) -> int:
        return self.sums.shape[2] - 1

    def box_sums(self, table: np.ndarray, xs, ys, width, height) -> np.ndarray:
        """Rectangle sums for every plane; returns shape (7, len(xs))."""
        x0 = np.asarray(xs)
        y0 = np.asarray(ys)
        x1 = x0 + width
        y1 = y0 + height
        return table[:, y1, x1] - table[:, y0, x1] - table[:, y1, x0] + table[:, y0, x0]


def _moments_to_descriptor(s: np.ndarray, s2: np.ndarray, n: int) -> np.ndarray:
    """Turn integer sums of shape (7, ...) into descriptors of shape (..., 14)."""
    denom = PLANE_SCALES.reshape((-1,) + (1,) * (s.ndim - 1)) * n
    if n * n * int(PLANE_SCALES.max()) ** 2 < _INT64_SAFE:
        num = n * s2 - s * s
    else:
        num = (n * s2.astype(object) - s.astype(object) ** 2).astype(np.float64)
    mean = s / denom
    std = np.sqrt(np.maximum(num, 0).astype(np.float64)) / denom
    out = np.empty(s.shape[1:] + (DESCRIPTOR_SIZE,), dtype=np.float64)
    out[..., 0::2] = np.moveaxis(mean, 0, -1)
    out[..., 1::2] = np.moveaxis(std, 0, -1)
    return out


def patch_descriptor(stats: IntegralStats, rect: PatchRect) -> np.ndarray:
    """Mean and std of each plane over a square patch, interleaved (14 values)."""
    rect.check(stats.width, stats.height)
    return patch_descriptors(stats, [rect.x], [rect.y], rect.size)[0]


def patch_descriptors(stats: IntegralStats, xs, ys, size: int) -> np.ndarray:
    """Descriptors for many same-sized patches given their top-left corners."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    if size < 1:
        raise BoundsError(f"patch size must be >= 1, got {size}")
    if xs.size and (xs.min() < 0 or ys.min() < 0
                    or xs.max() + size > stats.width or ys.max() + size > stats.height):
        raise BoundsError(f"size-{size} patches exceed a {stats.width}x{stats.height} image")
    s = stats.box_sums(stats.sums, xs, ys, size, size)
    s2 = stats.box_sums(stats.sq_sums, xs, ys, size, size)
    return _moments_to_descriptor(s, s2, size * size)


def descriptor_field(stats: IntegralStats, size: int) -> np.ndarray:
    """Descriptor of the size x size patch at every top-left position.

    Returns an array of shape (H - size + 1, W - size + 1, 14).
    """
    h, w = stats.height, stats.width
    if size < 1 or size > min(h, w):
        raise BoundsError(f"patch size {size} does not fit a {w}x{h} image")

    def window(t):
        return t[:, size:, size:] - t[:, :-size, size:] - t[:, size:, :-size] + t[:, :-size, :-size]

    return _moments_to_descriptor(window(stats.sums), window(stats.sq_sums), size * size)


def descriptor_distance(a, b) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def tile_origins(width: int, height: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-left corners of the non-overlapping size x size tiling anchored at (0, 0).

    Row-major order; partial strips at the right and bottom are dropped.
    """
    ny, nx = height // size, width // size
    ys, xs = np.meshgrid(np.arange(ny) * size, np.arange(nx) * size, indexing="ij")
    return xs.ravel(), ys.ravel()
