"""Gradient-weighted class activation maps fused across three depths.

Per-channel weights follow the axiom-based formulation: the channel's
gradient-activation product summed over space, divided by the channel's
activation mass. Each depth's map is min-max normalized, upsampled to the
input size, and the three are averaged.
"""

import os
import tempfile
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torch.nn import functional as F

from .errors import DataError

EPS = 1e-8


@dataclass(frozen=True)
class CamResult:
    image_id: str
    heatmap: np.ndarray
    target_class: int
    block_maps: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        for name, grid in [("heatmap", self.heatmap), *[
                (f"block_maps[{i}]", m) for i, m in enumerate(self.block_maps)]]:
            if grid.ndim != 2:
                raise DataError(f"{name} must be 2-D")
            if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
                raise DataError(f"{name} values must lie in [0, 1]")


def _normalize(grid: torch.Tensor) -> torch.Tensor:
    """Min-max to [0, 1]; a constant grid maps to all zeros."""
    lo = grid.min()
    hi = grid.max()
    if hi == lo:
        return torch.zeros_like(grid)
    return (grid - lo) / (hi - lo)


def xgradcam_fused(model: torch.nn.Module, values: np.ndarray,
                   target_class: int | None = None,
                   image_id: str = "") -> CamResult:
    """Fused activation map for one (3, H, W) input tensor.

    The per-block maps come from the model's three deepest residual
    stages; the target defaults to the predicted class.
    """
    if values.ndim != 3 or values.shape[0] != 3:
        raise DataError(f"expected a (3, H, W) tensor, got {values.shape}")
    h, w = values.shape[1:]
    x = torch.from_numpy(np.array(values, dtype=np.float32, copy=True))
    x = x.unsqueeze(0).requires_grad_(True)

    activations = {}
    handles = []

    def hook(name):
        def capture(module, inputs, output):
            output.retain_grad()
            activations[name] = output
        return capture

    for name in ("layer2", "layer3", "layer4"):
        handles.append(getattr(model, name).register_forward_hook(hook(name)))

    was_training = model.training
    model.eval()
    try:
        logits = model(x)
        if target_class is None:
            target_class = int(logits.argmax(dim=1))
        if target_class not in (0, 1):
            raise DataError(f"target_class must be 0 or 1, got {target_class}")
        model.zero_grad(set_to_none=True)
        logits[0, target_class].backward()
    finally:
        for handle in handles:
            handle.remove()
        if was_training:
            model.train()

    block_maps = []
    with torch.no_grad():
        for name in ("layer2", "layer3", "layer4"):
            act = activations[name][0]
            grad = activations[name].grad[0]
            weights = (grad * act).sum(dim=(1, 2)) / (act.sum(dim=(1, 2)) + EPS)
            cam = F.relu((weights[:, None, None] * act).sum(dim=0))
            cam = _normalize(cam)
            cam = F.interpolate(cam[None, None], size=(h, w), mode="bilinear",
                                align_corners=False)[0, 0]
            block_maps.append(cam.clamp(0.0, 1.0).numpy())

    fused = np.mean(np.stack(block_maps), axis=0)
    return CamResult(image_id=image_id, heatmap=fused,
                     target_class=target_class,
                     block_maps=tuple(block_maps))


def tensor_to_rgb(values: np.ndarray) -> np.ndarray:
    """Undo the [-1, 1] normalization back to display pixels."""
    pixels = np.clip((values.transpose(1, 2, 0) + 1.0) * 127.5, 0, 255)
    return np.floor(pixels + 0.5).astype(np.uint8)


def heat_color(heatmap: np.ndarray) -> np.ndarray:
    """Black-red-yellow ramp as (H, W, 3) uint8."""
    t = np.clip(heatmap, 0.0, 1.0)
    r = np.clip(2.0 * t, 0, 1)
    g = np.clip(2.0 * t - 1.0, 0, 1)
    b = np.zeros_like(t)
    return np.floor(np.stack([r, g, b], axis=2) * 255 + 0.5).astype(np.uint8)


def write_overlay(path, values: np.ndarray, heatmap: np.ndarray,
                  alpha: float = 0.45) -> None:
    """Blend the heatmap over the image, weighting by local heat."""
    base = tensor_to_rgb(values).astype(np.float64)
    color = heat_color(heatmap).astype(np.float64)
    weight = alpha * heatmap[:, :, None]
    blended = np.clip((1.0 - weight) * base + weight * color, 0, 255)
    image = Image.fromarray(np.floor(blended + 0.5).astype(np.uint8), mode="RGB")
    parent = os.path.dirname(os.fspath(path)) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".png", dir=parent)
    os.close(fd)
    try:
        image.save(tmp, format="PNG")
        os.replace(tmp, path)
    except OSError:
        os.unlink(tmp)
        raise
