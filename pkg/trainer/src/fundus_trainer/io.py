"""File interchange: manifest CSV, tensor files, prediction CSV.

These readers speak the preprocessing tool's on-disk formats and nothing
else; the two codebases share no code, only bytes.
"""

import csv
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DataError

TENSOR_MAGIC = b"FPT1"
MANIFEST_COLUMNS = ("image_id", "path", "dataset", "split", "patient_id",
                    "laterality", "dr_grade", "referable", "quality",
                    "quality_scheme")


@dataclass(frozen=True)
class ImageRow:
    """One manifest row reduced to what training needs."""

    image_id: str
    split: str
    label: int | None


def _row_label(row: dict) -> int | None:
    referable = (row.get("referable") or "").strip()
    if referable:
        value = int(referable)
        if value not in (0, 1):
            raise DataError(f"referable must be 0 or 1, got {value}")
        return value
    grade = (row.get("dr_grade") or "").strip()
    if grade:
        value = int(grade)
        if value not in (0, 1, 2, 3, 4):
            raise DataError(f"dr_grade must be 0..4, got {value}")
        return 1 if value >= 2 else 0
    return None


def read_manifest(path: str | os.PathLike) -> list[ImageRow]:
    """Load the shared manifest schema; referable wins over dr_grade."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in MANIFEST_COLUMNS
                       if c not in (reader.fieldnames or [])]
            if missing:
                raise DataError(f"{path}: missing manifest columns {missing}")
            rows = []
            seen = set()
            for i, row in enumerate(reader, start=2):
                image_id = (row.get("image_id") or "").strip()
                if not image_id:
                    raise DataError(f"{path}: line {i} has no image_id")
                if image_id in seen:
                    raise DataError(f"{path}: duplicate image_id {image_id!r}")
                seen.add(image_id)
                try:
                    label = _row_label(row)
                except ValueError as exc:
                    raise DataError(f"{path}: line {i}: {exc}") from exc
                rows.append(ImageRow(image_id=image_id,
                                     split=(row.get("split") or "").strip(),
                                     label=label))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    return rows


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read one tensor file: magic, u32 little-endian dims, f32 payload."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read tensor {path}: {exc}") from exc
    if blob[:4] != TENSOR_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise DataError(f"{path}: truncated header")
    c, h, w = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * c * h * w
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w)
    return np.ascontiguousarray(values)


def write_tensor(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a (C, H, W) float32 array in the shared tensor format."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 3:
        raise DataError(f"tensor must be 3-D, got shape {values.shape}")
    parent = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(suffix=".tmp", dir=parent)
    with os.fdopen(fd, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<III", *values.shape))
        fh.write(values.tobytes())
    os.replace(tmp, path)


def write_predictions(path: str | os.PathLike,
                      rows: list[tuple[str, float, float]]) -> None:
    """Write the prediction CSV the evaluation tool consumes.

    Rows are (image_id, prob_nonref, prob_ref); duplicates and
    probabilities that fail to sum to 1 are rejected here rather than
    at evaluation time.
    """
    seen = set()
    for image_id, p0, p1 in rows:
        if image_id in seen:
            raise DataError(f"duplicate prediction for {image_id!r}")
        seen.add(image_id)
        if abs(p0 + p1 - 1.0) > 1e-6:
            raise DataError(
                f"{image_id!r}: probabilities sum to {p0 + p1!r}, not 1")
        if not (0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0):
            raise DataError(f"{image_id!r}: probabilities out of [0, 1]")
    parent = os.path.dirname(os.fspath(path)) or "."
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(suffix=".tmp", dir=parent)
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "prob_nonref", "prob_ref"])
        for image_id, p0, p1 in rows:
            writer.writerow([image_id, repr(float(p0)), repr(float(p1))])
    os.replace(tmp, path)
