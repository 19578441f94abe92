"""Change overlays: appeared objects tinted green, disappeared ones red."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .dynamic_detect import ChangeMap
from .errors import DimensionMismatchError
from .imaging import check_rgb

GREEN = np.array([0, 255, 0])
RED = np.array([255, 0, 0])


def _blend(pixels: np.ndarray, color: np.ndarray) -> np.ndarray:
    return (pixels.astype(np.int64) + color + 1) // 2


def render_overlay(before: np.ndarray, after: np.ndarray, changes: ChangeMap,
                   threshold: float = 0.5) -> np.ndarray:
    """Blend 50% green where appeared >= threshold and 50% red where disappeared >= threshold.

    The base image is 'after'. Pixels flagged by both maps are green, and
    the border pixels of each such region are red so both stay visible.
    """
    after = check_rgb(after)
    check_rgb(before)
    shape = after.shape[:2]
    if before.shape[:2] != shape or changes.appeared.shape != shape or changes.disappeared.shape != shape:
        raise DimensionMismatchError("overlay inputs must share one size")
    app = changes.appeared >= threshold
    dis = changes.disappeared >= threshold
    both = app & dis
    outline = both & ~ndimage.binary_erosion(both, border_value=1)
    red = (dis & ~both) | outline
    green = app & ~outline
    out = after.astype(np.int64)
    out[green] = _blend(out[green], GREEN)
    out[red] = _blend(out[red], RED)
    return out.astype(np.uint8)
