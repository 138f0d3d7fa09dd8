"""Kernel construction shared by both compute backends.

Weights are built once here so the compiled and NumPy lanes consume
bit-identical coefficients.
"""

import numpy as np

from ..errors import ContractError


def gaussian_weights(sigma: float, truncation: float = 3.0) -> np.ndarray:
    """1-D Gaussian taps truncated at ``truncation * sigma`` and renormalized to unit sum."""
    if sigma <= 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    if truncation < 1:
        raise ContractError(f"truncation must be >= 1, got {truncation}")
    radius = int(truncation * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w /= w.sum()
    return w
