"""Shared raster sampling helpers."""

from __future__ import annotations

import numpy as np


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample image at float coordinates with bilinear interpolation.

    image is (H, W) or (H, W, C); x, y are same-shape float arrays in pixel
    units (pixel centers at integers). Coordinates are clamped to the image
    border, so callers that care about out-of-bounds must mask separately.
    Returns float64 samples shaped like x (+ trailing C axis if present).
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[..., None]
    fy = (yc - y0)[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out[..., 0] if squeeze else out


def resize_bilinear(image: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Resize by bilinear sampling; preserves uint8 dtype via round-and-clip."""
    h, w = image.shape[:2]
    xs = (np.arange(out_width) + 0.5) * (w / out_width) - 0.5
    ys = (np.arange(out_height) + 0.5) * (h / out_height) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    vals = bilinear_sample(image, gx, gy)
    if image.dtype == np.uint8:
        return np.clip(np.rint(vals), 0, 255).astype(np.uint8)
    return vals.astype(image.dtype)
