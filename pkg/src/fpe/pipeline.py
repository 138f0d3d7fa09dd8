"""Per-image preprocessing pipeline and parallel batch driver.

One image flows: load, estimate the FOV, crop to its bounding box,
optionally pad square, resize, contrast-enhance, and normalize to a
[-1, +1] float tensor. Batches fan out over processes; every output
file is written atomically and its content is independent of the
worker count.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cohort import ManifestRecord
from .enhance import EnhanceParams, contrast_enhance
from .errors import ContractError, FpeError, ImageIOError, TensorFormatError
from .fov import bounding_box, estimate_fov
from .imaging import BBox, FovMask, RasterImage, load_image, save_image

ENHANCE_STAGES = ("after_resize", "before_resize")
TENSOR_MAGIC = b"FPT1"


@dataclass(frozen=True)
class PreprocessConfig:
    """Knobs for the per-image pipeline and the batch driver."""

    target_size: int = 512
    enhance: EnhanceParams = field(default_factory=EnhanceParams)
    enhance_stage: str = "after_resize"
    square_pad: bool = True
    emit_png: bool = True
    emit_tensor: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.target_size < 32:
            raise ContractError(f"target_size must be >= 32, got {self.target_size}")
        if self.enhance_stage not in ENHANCE_STAGES:
            raise ContractError(
                f"enhance_stage must be one of {ENHANCE_STAGES}, got {self.enhance_stage!r}"
            )
        if self.workers < 1:
            raise ContractError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True, eq=False)
class TensorRecord:
    """Channel-major float tensor in [-1, +1] ready for training."""

    image_id: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.image_id:
            raise ContractError("image_id must be nonempty")
        v = self.values
        if v.ndim != 3 or v.shape[0] != 3:
            raise ContractError(f"values must be (3, H, W), got shape {v.shape}")
        if v.dtype != np.float32:
            raise ContractError(f"values must be float32, got {v.dtype}")
        if v.size and (float(v.min()) < -1.0 or float(v.max()) > 1.0):
            raise ContractError("tensor values must lie in [-1, 1]")
        arr = np.ascontiguousarray(v)
        if arr is v and v.flags.writeable:
            arr = v.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class BatchReport:
    """Outcome of one batch run; failures are per-record, never fatal."""

    processed: int
    failed: tuple[tuple[str, str], ...]
    wall_time: float
    per_image_mean: float
    per_image_sd: float

    def as_dict(self) -> dict:
        return {
            "processed": self.processed,
            "failed": [[image_id, kind] for image_id, kind in self.failed],
            "wall_time": self.wall_time,
            "per_image_time": {"mean": self.per_image_mean, "sd": self.per_image_sd},
        }


def crop_to_fov(image: RasterImage, bbox: BBox, square_pad: bool) -> RasterImage:
    """Cut the bounding box out of the image, optionally padding square.

    Padding is black, split evenly; an odd remainder puts the extra
    pixel on the bottom or right.
    """
    if bbox.row_max >= image.height or bbox.col_max >= image.width:
        raise ContractError(
            f"bbox {bbox} exceeds image {image.height} x {image.width}"
        )
    sub = np.asarray(image.data)[
        bbox.row_min:bbox.row_max + 1, bbox.col_min:bbox.col_max + 1
    ]
    if square_pad:
        sub = _pad_square(sub, fill=0)
    return RasterImage.from_array(sub)


def crop_mask(mask: FovMask, bbox: BBox, square_pad: bool) -> FovMask:
    """Crop a mask with the same geometry as crop_to_fov (padding False)."""
    if bbox.row_max >= mask.height or bbox.col_max >= mask.width:
        raise ContractError(f"bbox {bbox} exceeds mask {mask.height} x {mask.width}")
    sub = np.asarray(mask.bits)[
        bbox.row_min:bbox.row_max + 1, bbox.col_min:bbox.col_max + 1
    ]
    if square_pad:
        sub = _pad_square(sub, fill=False)
    return FovMask.from_array(sub)


def _pad_square(arr: np.ndarray, fill) -> np.ndarray:
    h, w = arr.shape[:2]
    if h == w:
        return arr
    if h < w:
        deficit = w - h
        top = deficit // 2
        pad = [(top, deficit - top), (0, 0)]
    else:
        deficit = h - w
        left = deficit // 2
        pad = [(0, 0), (left, deficit - left)]
    if arr.ndim == 3:
        pad.append((0, 0))
    return np.pad(arr, pad, mode="constant", constant_values=fill)


def resize(image: RasterImage, target: int) -> RasterImage:
    """Bilinear resample to target x target (half-pixel centers)."""
    if target < 1:
        raise ContractError(f"target must be >= 1, got {target}")
    out = kernels.resize_bilinear(np.asarray(image.data), target, target)
    return RasterImage.from_array(out)


def resize_mask(mask: FovMask, target: int) -> FovMask:
    """Nearest-neighbor resample of a mask with the same center mapping."""
    if target < 1:
        raise ContractError(f"target must be >= 1, got {target}")
    h, w = mask.height, mask.width
    sy = np.maximum((np.arange(target, dtype=np.float64) + 0.5) * (h / target) - 0.5, 0.0)
    sx = np.maximum((np.arange(target, dtype=np.float64) + 0.5) * (w / target) - 0.5, 0.0)
    rows = np.minimum(np.floor(sy + 0.5).astype(np.int64), h - 1)
    cols = np.minimum(np.floor(sx + 0.5).astype(np.int64), w - 1)
    bits = np.asarray(mask.bits)[rows[:, None], cols[None, :]]
    return FovMask.from_array(bits)


def normalize(image: RasterImage, image_id: str = "") -> TensorRecord:
    """Map intensities to [-1, +1] as value = pixel / 127.5 - 1, channel-major."""
    values = np.asarray(image.data, dtype=np.float64) / 127.5 - 1.0
    values = np.transpose(values, (2, 0, 1)).astype(np.float32)
    return TensorRecord(image_id=image_id or "unnamed", values=values)


def write_tensor(record: TensorRecord, path: str | os.PathLike) -> None:
    """Serialize a tensor: magic, u32 LE dims (3, H, W), float32 LE payload."""
    values = np.asarray(record.values, dtype="<f4")
    header = TENSOR_MAGIC + struct.pack("<III", *values.shape)
    payload = header + values.tobytes(order="C")
    path = os.fspath(path)
    parent = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(suffix=".t32.tmp", dir=parent)
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def read_tensor(path: str | os.PathLike) -> TensorRecord:
    """Parse a tensor file written by write_tensor."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 16 or blob[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"{path}: bad magic or truncated header")
    c, h, w = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * c * h * w
    if c != 3 or len(blob) != expected:
        raise TensorFormatError(
            f"{path}: expected 3 x {h} x {w} float32 payload of {expected} bytes, "
            f"got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w)
    image_id = os.path.splitext(os.path.basename(path))[0]
    return TensorRecord(image_id=image_id, values=values.astype(np.float32))


def preprocess_one(
    record: ManifestRecord, config: PreprocessConfig | None = None
) -> tuple[RasterImage, TensorRecord | None]:
    """Run the full pipeline on one manifest record.

    Returns the enhanced raster and, when config.emit_tensor is set, its
    normalized tensor.
    """
    if config is None:
        config = PreprocessConfig()
    image = load_image(record.path)
    fov = estimate_fov(image)
    box = bounding_box(fov)
    cropped = crop_to_fov(image, box, config.square_pad)
    mask = crop_mask(fov, box, config.square_pad)

    if config.enhance_stage == "before_resize":
        enhanced = contrast_enhance(cropped, mask, config.enhance)
        final = resize(enhanced, config.target_size)
    else:
        resized = resize(cropped, config.target_size)
        resized_mask = resize_mask(mask, config.target_size)
        final = contrast_enhance(resized, resized_mask, config.enhance)

    tensor = normalize(final, record.image_id) if config.emit_tensor else None
    return final, tensor


def _process_record(record: ManifestRecord, config: PreprocessConfig,
                    out_dir: str) -> tuple[str, str | None, float]:
    """Worker body: process one record, write outputs, report (id, error, secs)."""
    start = time.perf_counter()
    try:
        final, tensor = preprocess_one(record, config)
        if config.emit_png:
            save_image(final, os.path.join(out_dir, "png", f"{record.image_id}.png"))
        if config.emit_tensor:
            write_tensor(tensor, os.path.join(out_dir, "tensor", f"{record.image_id}.t32"))
    except FpeError as exc:
        return record.image_id, type(exc).__name__, time.perf_counter() - start
    return record.image_id, None, time.perf_counter() - start


def run_batch(
    manifest: list[ManifestRecord],
    config: PreprocessConfig | None = None,
    out_dir: str | os.PathLike = "out",
) -> BatchReport:
    """Process a manifest with config.workers parallel workers.

    Outputs land in <out_dir>/png and <out_dir>/tensor plus a
    report.json; file contents are identical for any worker count.
    Per-record failures are collected in the report, never raised.
    """
    if config is None:
        config = PreprocessConfig()
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        if config.emit_png:
            os.makedirs(os.path.join(out_dir, "png"), exist_ok=True)
        if config.emit_tensor:
            os.makedirs(os.path.join(out_dir, "tensor"), exist_ok=True)
    except OSError as exc:
        raise ImageIOError(f"cannot create output directory {out_dir}: {exc}") from exc

    start = time.perf_counter()
    if config.workers == 1 or len(manifest) <= 1:
        results = [_process_record(r, config, out_dir) for r in manifest]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(_process_record, manifest,
                         [config] * len(manifest), [out_dir] * len(manifest))
            )
    wall = time.perf_counter() - start

    failed = tuple((image_id, kind) for image_id, kind, _ in results if kind is not None)
    times = [secs for _, kind, secs in results if kind is None]
    mean = sum(times) / len(times) if times else 0.0
    sd = math.sqrt(sum((t - mean) ** 2 for t in times) / len(times)) if times else 0.0
    report = BatchReport(
        processed=len(times),
        failed=failed,
        wall_time=wall,
        per_image_mean=mean,
        per_image_sd=sd,
    )

    payload = report.as_dict()
    payload["config"] = {
        "target_size": config.target_size,
        "enhance_stage": config.enhance_stage,
        "square_pad": config.square_pad,
        "emit_png": config.emit_png,
        "emit_tensor": config.emit_tensor,
        "workers": config.workers,
        "enhance": {
            "alpha": config.enhance.alpha,
            "beta": config.enhance.beta,
            "gamma": config.enhance.gamma,
            "sigma_divisor": config.enhance.sigma_divisor,
            "kernel_truncation": config.enhance.kernel_truncation,
        },
    }
    report_path = os.path.join(out_dir, "report.json")
    fd, tmp = tempfile.mkstemp(suffix=".json.tmp", dir=out_dir)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, report_path)
    return report


__all__ = [
    "PreprocessConfig",
    "TensorRecord",
    "BatchReport",
    "crop_to_fov",
    "crop_mask",
    "resize",
    "resize_mask",
    "normalize",
    "write_tensor",
    "read_tensor",
    "preprocess_one",
    "run_batch",
]
