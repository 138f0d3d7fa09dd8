"""Network construction: ResNet-18 with a two-class head."""

import torch
from torch import nn
from torchvision import models


def build_model(pretrained: bool = True) -> nn.Module:
    """ResNet-18 with its final layer swapped for a 2-way classifier.

    pretrained=True starts from generic ImageNet weights (downloads them
    on first use); False gives a random initialization, which tests use.
    """
    weights = models.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
    model = models.resnet18(weights=weights)
    model.fc = nn.Linear(model.fc.in_features, 2)
    return model


def save_checkpoint(model: nn.Module, path) -> None:
    torch.save(model.state_dict(), path)


def load_checkpoint(path, pretrained: bool = False) -> nn.Module:
    model = build_model(pretrained=pretrained)
    model.load_state_dict(torch.load(path, map_location="cpu",
                                     weights_only=True))
    model.eval()
    return model
