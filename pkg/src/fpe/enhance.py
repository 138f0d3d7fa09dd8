"""Contrast enhancement for fundus photographs.

The transform blends each pixel against a heavily blurred copy of the
image, out = clamp(alpha*I - beta*blur(I) + gamma), which flattens slow
illumination gradients and amplifies local structure. Pixels outside
the convex hull of the field of view are first replaced by the mean
in-hull color so the FOV border contributes no spurious gradients, and
everything outside the FOV is zeroed in the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, EmptyMaskError
from .fov import convex_hull_mask
from .imaging import FovMask, GrayMap, RasterImage


@dataclass(frozen=True)
class EnhanceParams:
    """Blending weights and kernel geometry for contrast enhancement.

    sigma for the blur is derived per image as width / sigma_divisor.
    """

    alpha: float = 4.0
    beta: float = 4.0
    gamma: float = 128.0
    sigma_divisor: float = 90.0
    kernel_truncation: float = 3.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ContractError(
                f"alpha and beta must be non-negative, got {self.alpha}, {self.beta}"
            )
        if not 0 <= self.gamma <= 255:
            raise ContractError(f"gamma must be in [0, 255], got {self.gamma}")
        if self.sigma_divisor <= 0:
            raise ContractError(f"sigma_divisor must be positive, got {self.sigma_divisor}")
        if self.kernel_truncation < 1:
            raise ContractError(
                f"kernel_truncation must be >= 1, got {self.kernel_truncation}"
            )


def mean_rgb_within(image: RasterImage, region: FovMask) -> tuple[float, float, float]:
    """Arithmetic per-channel mean over the region's foreground pixels."""
    if (region.height, region.width) != (image.height, image.width):
        raise ContractError(
            f"region {region.height} x {region.width} does not match "
            f"image {image.height} x {image.width}"
        )
    bits = np.asarray(region.bits)
    count = int(bits.sum())
    if count == 0:
        raise EmptyMaskError("cannot average over an empty region")
    pixels = np.asarray(image.data, dtype=np.float64)[bits]
    means = pixels.sum(axis=0) / count
    return float(means[0]), float(means[1]), float(means[2])


def fill_outside(
    image: RasterImage, hull: FovMask, color: tuple[float, float, float]
) -> RasterImage:
    """Replace every pixel outside the hull with the rounded color."""
    if (hull.height, hull.width) != (image.height, image.width):
        raise ContractError(
            f"hull {hull.height} x {hull.width} does not match "
            f"image {image.height} x {image.width}"
        )
    rounded = []
    for c in color:
        if not 0 <= c <= 255:
            raise ContractError(f"fill color components must be in [0, 255], got {c}")
        rounded.append(int(np.floor(c + 0.5)))
    out = np.array(image.data, dtype=np.uint8)
    out[~np.asarray(hull.bits)] = rounded
    return RasterImage.from_array(out)


def gaussian_background(
    source: RasterImage | GrayMap | np.ndarray,
    sigma: float,
    truncation: float = 3.0,
) -> np.ndarray:
    """Separable Gaussian blur, returned as float64 with the source shape.

    The kernel is truncated at truncation*sigma and renormalized to unit
    sum; borders are handled by edge replication. 3-d input is blurred
    per channel.
    """
    if isinstance(source, RasterImage):
        arr = np.asarray(source.data, dtype=np.float64)
    elif isinstance(source, GrayMap):
        arr = np.asarray(source.data, dtype=np.float64)
    else:
        arr = np.asarray(source, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ContractError(f"expected a 2-d or 3-d source, got shape {arr.shape}")
    weights = kernels.gaussian_weights(sigma, truncation)
    if arr.ndim == 2:
        return kernels.gaussian_blur(arr, weights)
    out = np.empty_like(arr)
    for ch in range(arr.shape[2]):
        out[:, :, ch] = kernels.gaussian_blur(np.ascontiguousarray(arr[:, :, ch]), weights)
    return out


def contrast_enhance(
    image: RasterImage, fov: FovMask, params: EnhanceParams | None = None
) -> RasterImage:
    """Blend the image against its blurred background inside the FOV.

    Steps: hull the FOV, replace out-of-hull pixels with the mean
    in-hull color, compute alpha*I - beta*blur(I) + gamma per channel
    with sigma = image width / sigma_divisor, clamp to [0, 255], round,
    and zero everything outside the FOV.
    """
    if params is None:
        params = EnhanceParams()
    if (fov.height, fov.width) != (image.height, image.width):
        raise ContractError(
            f"fov {fov.height} x {fov.width} does not match "
            f"image {image.height} x {image.width}"
        )
    hull = convex_hull_mask(fov)
    work = fill_outside(image, hull, mean_rgb_within(image, hull))
    sigma = image.width / params.sigma_divisor

    work_f = np.asarray(work.data, dtype=np.float64)
    background = gaussian_background(work, sigma, params.kernel_truncation)
    blended = params.alpha * work_f - params.beta * background + params.gamma
    clamped = np.clip(blended, 0.0, 255.0)
    out = np.floor(clamped + 0.5).astype(np.uint8)
    out[~np.asarray(fov.bits)] = 0
    return RasterImage.from_array(out)
