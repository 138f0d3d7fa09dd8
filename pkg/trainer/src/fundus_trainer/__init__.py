"""Classifier training and activation-map rendering for preprocessed fundus tensors."""

__version__ = "0.1.0"

from .augment import AugmentConfig
from .cam import CamResult, xgradcam_fused
from .errors import ConfigError, DataError, TrainerError
from .io import ImageRow, read_manifest, read_tensor, write_predictions, write_tensor
from .model import build_model, load_checkpoint, save_checkpoint
from .predict import PredictOutcome, predict
from .train import PlateauHalving, TrainConfig, TrainResult, train

__all__ = [
    "AugmentConfig",
    "CamResult",
    "ConfigError",
    "DataError",
    "ImageRow",
    "PlateauHalving",
    "PredictOutcome",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "build_model",
    "load_checkpoint",
    "predict",
    "read_manifest",
    "read_tensor",
    "save_checkpoint",
    "train",
    "write_predictions",
    "write_tensor",
    "xgradcam_fused",
]
