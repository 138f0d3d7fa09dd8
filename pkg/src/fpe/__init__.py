"""Fundus photograph preprocessing and screening evaluation toolkit.

Subpackages: imaging (raster types and I/O), fov (field-of-view
geometry), enhance (contrast enhancement), pipeline (batch
preprocessing), stats (ROC, bootstrap, Wilson), cohort (labels,
manifests, aggregation), cli (command-line entry point).
"""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    DegenerateHistogramError,
    DegenerateLabelsError,
    EmptyMaskError,
    FovEstimationError,
    FpeError,
    ImageFormatError,
    ImageIOError,
    ManifestError,
    ReconciliationError,
    ResamplingFailureError,
    TensorFormatError,
)
from .imaging import BBox, FovMask, GrayMap, RasterImage, load_image, save_image

__all__ = [
    "__version__",
    "FpeError",
    "ContractError",
    "ImageIOError",
    "ImageFormatError",
    "TensorFormatError",
    "DegenerateHistogramError",
    "EmptyMaskError",
    "FovEstimationError",
    "DegenerateLabelsError",
    "ResamplingFailureError",
    "ManifestError",
    "ReconciliationError",
    "RasterImage",
    "GrayMap",
    "FovMask",
    "BBox",
    "load_image",
    "save_image",
]
