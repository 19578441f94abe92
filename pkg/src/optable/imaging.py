"""Raster I/O and per-pixel image operations.

Images are plain numpy arrays: color frames are ``uint8`` arrays of shape
``(height, width, 3)``, masks are ``bool`` arrays of shape ``(height, width)``
and gray planes / probability maps are ``float64`` arrays in ``[0, 1]``.
"""

from __future__ import annotations

import colorsys
import os

import numpy as np
from matplotlib.colors import rgb_to_hsv as _mpl_rgb_to_hsv
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import ImageDecodeError, ImageSizeError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SOBEL_MAX = 4.0 * np.sqrt(2.0)
MASK_THRESHOLD = 128


def check_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageSizeError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageSizeError("image must be at least 1x1")
    if img.dtype != np.uint8:
        raise ImageSizeError(f"expected uint8 pixels, got {img.dtype}")
    return img


def _open(path) -> Image.Image:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        im = Image.open(path)
        im.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    return im


def load_image(path) -> np.ndarray:
    """Decode an 8-bit RGB (or grayscale, replicated) raster file."""
    im = _open(path)
    if im.mode not in ("RGB", "L", "RGBA", "P"):
        raise ImageDecodeError(f"unsupported pixel mode {im.mode!r} in {path}")
    return np.array(im.convert("RGB"), dtype=np.uint8)


def save_image(path, img: np.ndarray) -> None:
    Image.fromarray(check_rgb(img), mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Read a grayscale mask; values >= 128 are foreground."""
    im = _open(path)
    return np.array(im.convert("L"), dtype=np.uint8) >= MASK_THRESHOLD


def save_mask(path, mask: np.ndarray) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def save_probability_map(path, prob: np.ndarray) -> None:
    """Store a [0, 1] map as a 16-bit grayscale PNG (value = round(p * 65535))."""
    prob = np.asarray(prob, dtype=np.float64)
    codes = np.floor(np.clip(prob, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(codes).save(path, format="PNG")


def load_probability_map(path) -> np.ndarray:
    im = _open(path)
    return np.array(im, dtype=np.float64) / 65535.0


def downsample2(img: np.ndarray) -> np.ndarray:
    """Halve both dimensions by 2x2 box averaging, rounding half up.

    A trailing odd row or column is dropped. Works on ``(H, W)`` and
    ``(H, W, C)`` uint8 arrays.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ImageSizeError(f"downsample2 needs at least 2x2 pixels, got {w}x{h}")
    h2, w2 = h // 2, w // 2
    a = img[: 2 * h2, : 2 * w2].astype(np.int32)
    total = a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]
    return ((total + 2) // 4).astype(img.dtype)


def downsample_mask(mask: np.ndarray) -> np.ndarray:
    """Downsample a mask the same way as its image.

    Equivalent to averaging the 0/255 encoding with :func:`downsample2` and
    re-thresholding at 128, i.e. a block is foreground when at least two of
    its four pixels are.
    """
    encoded = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    return downsample2(encoded) >= MASK_THRESHOLD


def rgb_to_hsv(r: float, g: float, b: float) -> tuple[float, float, float]:
    """Hexcone HSV with hue scaled to [0, 1]; hue is 0 for grays."""
    return colorsys.rgb_to_hsv(r, g, b)


def rgb_to_hsv_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rgb_to_hsv` over a float array with last axis of length 3."""
    return _mpl_rgb_to_hsv(np.asarray(rgb, dtype=np.float64))


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an RGB image, in [0, 1]."""
    rgb = check_rgb(img).astype(np.float64) / 255.0
    wr, wg, wb = LUMA_WEIGHTS
    y = wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]
    return np.clip(y, 0.0, 1.0)


def sobel_magnitude(gray: np.ndarray) -> np.ndarray:
    """Gradient magnitude from 3x3 Sobel kernels, replicate border, scaled to [0, 1]."""
    gray = np.asarray(gray, dtype=np.float64)
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    return np.clip(np.hypot(gx, gy) / SOBEL_MAX, 0.0, 1.0)
