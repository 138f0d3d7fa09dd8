"""NumPy implementations of the hot kernels.

This is the fallback lane when the compiled extension is unavailable. Each
function mirrors the compiled backend's arithmetic operation for operation
(same accumulation order, same float64 intermediates), so the two backends
produce bit-identical outputs.
"""

import numpy as np
from scipy import ndimage


def gaussian_blur(channel: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable convolution with edge replication, horizontal then vertical pass."""
    src = channel
    h, w = src.shape
    r = (len(weights) - 1) // 2

    tmp = np.zeros((h, w), dtype=np.float64)
    cols = np.arange(w)
    for k in range(len(weights)):
        idx = np.clip(cols + (k - r), 0, w - 1)
        tmp += weights[k] * src[:, idx]

    out = np.zeros((h, w), dtype=np.float64)
    rows = np.arange(h)
    for k in range(len(weights)):
        idx = np.clip(rows + (k - r), 0, h - 1)
        out += weights[k] * tmp[idx, :]
    return out


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, 3) uint8 grid, half-pixel centers."""
    h, w = pixels.shape[:2]
    scale_y = h / out_h
    scale_x = w / out_w
    sy = np.maximum((np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5, 0.0)
    sx = np.maximum((np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5, 0.0)
    y0 = sy.astype(np.int64)
    x0 = sx.astype(np.int64)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    p00 = pixels[y0[:, None], x0[None, :]].astype(np.float64)
    p01 = pixels[y0[:, None], x1[None, :]].astype(np.float64)
    p10 = pixels[y1[:, None], x0[None, :]].astype(np.float64)
    p11 = pixels[y1[:, None], x1[None, :]].astype(np.float64)

    val = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) + fy * ((1.0 - fx) * p10 + fx * p11)
    return np.floor(val + 0.5).astype(np.uint8)


def fill_holes(bits: np.ndarray) -> np.ndarray:
    """Foreground plus every background region not 4-connected to the border."""
    return ndimage.binary_fill_holes(bits)
