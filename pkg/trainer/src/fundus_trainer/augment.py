"""Label-preserving tensor augmentations for training batches."""

from dataclasses import dataclass

import torch
from torchvision.transforms import functional as TF

from .errors import ConfigError


@dataclass(frozen=True)
class AugmentConfig:
    """Mild geometric and photometric jitter; every range is adjustable."""

    enabled: bool = True
    horizontal_flip: bool = True
    vertical_flip: bool = True
    rotation_degrees: float = 15.0
    scale_low: float = 0.9
    scale_high: float = 1.1
    color_jitter: float = 0.1

    def __post_init__(self):
        if self.rotation_degrees < 0:
            raise ConfigError("rotation_degrees must be >= 0")
        if not 0 < self.scale_low <= self.scale_high:
            raise ConfigError("scale range must satisfy 0 < low <= high")
        if not 0 <= self.color_jitter < 1:
            raise ConfigError("color_jitter must be in [0, 1)")


def augment(x: torch.Tensor, config: AugmentConfig,
            generator: torch.Generator) -> torch.Tensor:
    """Randomly transform one (C, H, W) tensor; shape is preserved."""
    if not config.enabled:
        return x

    def rand():
        return torch.rand((), generator=generator).item()

    if config.horizontal_flip and rand() < 0.5:
        x = torch.flip(x, dims=(2,))
    if config.vertical_flip and rand() < 0.5:
        x = torch.flip(x, dims=(1,))
    if config.rotation_degrees > 0:
        angle = (2 * rand() - 1) * config.rotation_degrees
        x = TF.rotate(x, angle)
    if config.scale_high > config.scale_low or config.scale_low != 1.0:
        scale = config.scale_low + rand() * (config.scale_high - config.scale_low)
        x = TF.affine(x, angle=0.0, translate=[0, 0], scale=scale, shear=[0.0])
    if config.color_jitter > 0:
        brightness = 1.0 + (2 * rand() - 1) * config.color_jitter
        shift = (2 * rand() - 1) * config.color_jitter
        x = torch.clamp(x * brightness + shift, -1.0, 1.0)
    return x
