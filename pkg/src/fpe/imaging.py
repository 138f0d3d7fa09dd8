"""Image and mask value types plus lossless raster I/O.

All value types wrap read-only numpy arrays, so instances are safe to
share across workers. Pixel math elsewhere widens to int/float before
operating; storage stays 8-bit for images.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ContractError, ImageFormatError, ImageIOError

_GRAY_MODES = ("1", "L", "LA", "I", "I;16", "F")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB raster, row-major, shape (height, width, 3)."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError(
                f"image dimensions must be >= 1, got {self.width} x {self.height}"
            )
        if self.data.shape != (self.height, self.width, 3):
            raise ContractError(
                f"data shape {self.data.shape} does not match "
                f"{self.height} x {self.width} x 3"
            )
        if self.data.dtype != np.uint8:
            raise ContractError(f"image data must be uint8, got {self.data.dtype}")
        object.__setattr__(self, "data", _freeze(self.data))

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "RasterImage":
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ContractError(f"expected an H x W x 3 array, got shape {pixels.shape}")
        return cls(width=pixels.shape[1], height=pixels.shape[0],
                   data=pixels.astype(np.uint8, copy=False))

    def pixel(self, row: int, col: int) -> tuple[int, int, int]:
        """Bounds-checked accessor; raises IndexError outside the raster."""
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"pixel ({row}, {col}) outside {self.height} x {self.width}")
        r, g, b = self.data[row, col]
        return int(r), int(g), int(b)


@dataclass(frozen=True, eq=False)
class GrayMap:
    """Single-channel scalar map, row-major, shape (height, width)."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError(
                f"map dimensions must be >= 1, got {self.width} x {self.height}"
            )
        if self.data.shape != (self.height, self.width):
            raise ContractError(
                f"data shape {self.data.shape} does not match "
                f"{self.height} x {self.width}"
            )
        if self.data.dtype.kind not in "uif":
            raise ContractError(f"map data must be numeric, got {self.data.dtype}")
        if self.data.dtype.kind != "u" and self.data.size and float(self.data.min()) < 0:
            raise ContractError("map values must be non-negative")
        object.__setattr__(self, "data", _freeze(self.data))

    def value(self, row: int, col: int) -> float:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"value ({row}, {col}) outside {self.height} x {self.width}")
        return float(self.data[row, col])


@dataclass(frozen=True, eq=False)
class FovMask:
    """Boolean field-of-view mask; True marks pixels inside the FOV."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ContractError(
                f"mask dimensions must be >= 1, got {self.width} x {self.height}"
            )
        if self.bits.shape != (self.height, self.width):
            raise ContractError(
                f"bits shape {self.bits.shape} does not match "
                f"{self.height} x {self.width}"
            )
        if self.bits.dtype != np.bool_:
            raise ContractError(f"mask bits must be boolean, got {self.bits.dtype}")
        object.__setattr__(self, "bits", _freeze(self.bits))

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "FovMask":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ContractError(f"expected a 2-d array, got shape {bits.shape}")
        return cls(width=bits.shape[1], height=bits.shape[0],
                   bits=bits.astype(bool, copy=False))

    def count(self) -> int:
        """Number of foreground pixels."""
        return int(self.bits.sum())

    def bit(self, row: int, col: int) -> bool:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"bit ({row}, {col}) outside {self.height} x {self.width}")
        return bool(self.bits[row, col])


@dataclass(frozen=True)
class BBox:
    """Inclusive axis-aligned pixel rectangle."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if self.row_min < 0 or self.col_min < 0:
            raise ContractError(f"box corners must be non-negative, got {self}")
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ContractError(f"box must satisfy min <= max, got {self}")

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1


def load_image(path: str | os.PathLike) -> RasterImage:
    """Decode a PNG or JPEG file into an RGB raster.

    Grayscale sources are expanded to three identical channels. An
    unreadable file raises ImageIOError; unparseable or truncated
    content raises ImageFormatError.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            img.load()
            if img.mode in _GRAY_MODES:
                img = img.convert("L")
                gray = np.asarray(img, dtype=np.uint8)
                pixels = np.repeat(gray[:, :, None], 3, axis=2)
            else:
                if img.mode != "RGB":
                    img = img.convert("RGB")
                pixels = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    except OSError as exc:
        raise ImageFormatError(f"corrupt image {path}: {exc}") from exc
    return RasterImage.from_array(pixels)


def save_image(image: RasterImage, path: str | os.PathLike) -> None:
    """Write a lossless PNG; load_image of the result reproduces the input."""
    _atomic_png(Image.fromarray(np.asarray(image.data)), path)


def mask_to_png(mask: FovMask, path: str | os.PathLike) -> None:
    """Debug export of a mask as a 1-bit PNG."""
    _atomic_png(Image.fromarray(np.asarray(mask.bits)).convert("1"), path)


def _atomic_png(img: Image.Image, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    parent = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(suffix=".png.tmp", dir=parent)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            img.save(fh, format="PNG")
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
