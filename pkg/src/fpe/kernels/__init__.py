"""Low-level raster kernels with a compiled core and a NumPy fallback.

The compiled extension is used when it imported cleanly; set
``FPE_KERNEL_BACKEND=numpy`` or ``FPE_KERNEL_BACKEND=native`` to force a
lane. Both lanes produce bit-identical output for identical input.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ContractError
from . import _numpy
from .common import gaussian_weights

try:
    from . import _native
except ImportError:
    _native = None

_VALID_BACKENDS = ("native", "numpy")


def _select_backend():
    requested = os.environ.get("FPE_KERNEL_BACKEND")
    if requested is None:
        return "native" if _native is not None else "numpy"
    if requested not in _VALID_BACKENDS:
        raise ContractError(
            f"FPE_KERNEL_BACKEND must be one of {_VALID_BACKENDS}, got {requested!r}"
        )
    if requested == "native" and _native is None:
        raise ContractError(
            "FPE_KERNEL_BACKEND=native but the compiled extension is not available"
        )
    return requested


_BACKEND = _select_backend()
_impl = _native if _BACKEND == "native" else _numpy


def backend_name() -> str:
    """Name of the kernel lane in use: 'native' or 'numpy'."""
    return _BACKEND


def has_native() -> bool:
    """True when the compiled extension imported successfully."""
    return _native is not None


def gaussian_blur(channel: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable blur of one float64 channel with replicated edges."""
    src = np.ascontiguousarray(channel, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if src.ndim != 2:
        raise ContractError(f"expected a 2-d channel, got shape {channel.shape}")
    if w.ndim != 1 or w.shape[0] % 2 == 0:
        raise ContractError("weights must be a 1-d odd-length array")
    return _impl.gaussian_blur(src, w)


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an H x W x 3 uint8 image (half-pixel centers)."""
    src = np.ascontiguousarray(pixels, dtype=np.uint8)
    if src.ndim != 3 or src.shape[2] != 3:
        raise ContractError(f"expected an H x W x 3 image, got shape {pixels.shape}")
    if out_h < 1 or out_w < 1:
        raise ContractError(f"output size must be positive, got {out_h} x {out_w}")
    return _impl.resize_bilinear(src, out_h, out_w)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background regions not reachable from the border (4-connectivity)."""
    if mask.ndim != 2:
        raise ContractError(f"expected a 2-d mask, got shape {mask.shape}")
    if _BACKEND == "native":
        bits = np.ascontiguousarray(mask.astype(bool), dtype=np.uint8)
        return _impl.fill_holes(bits)
    return _numpy.fill_holes(mask.astype(bool))


__all__ = [
    "backend_name",
    "has_native",
    "gaussian_weights",
    "gaussian_blur",
    "resize_bilinear",
    "fill_holes",
]
