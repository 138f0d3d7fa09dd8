"""Field-of-view estimation and derived geometry.

The FOV is found by summing the three channels, splitting the sums with
an exhaustive exact-arithmetic Otsu threshold, and filling enclosed
holes. Geometry helpers derive the bounding box and a rasterized convex
hull from the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor

import numpy as np

from . import kernels
from .errors import (
    ContractError,
    DegenerateHistogramError,
    EmptyMaskError,
    FovEstimationError,
)
from .imaging import BBox, FovMask, GrayMap, RasterImage

SUM_BINS = 766  # channel sums span 0..765


@dataclass(frozen=True)
class OtsuResult:
    """Chosen split point and the between-class variance it attains."""

    threshold: int
    between_class_variance: float


def channel_sum_map(image: RasterImage) -> GrayMap:
    """Per-pixel sum R+G+B as a uint16 map (range 0..765)."""
    sums = np.asarray(image.data, dtype=np.uint16).sum(axis=2, dtype=np.uint16)
    return GrayMap(width=image.width, height=image.height, data=sums)


def sum_histogram(sums: GrayMap) -> np.ndarray:
    """Counts of each channel-sum value over the full 766-bin domain."""
    return np.bincount(sums.data.ravel().astype(np.int64), minlength=SUM_BINS)


def otsu_threshold(histogram: np.ndarray) -> OtsuResult:
    """Exhaustive Otsu split of a histogram of counts.

    Maximizes the between-class variance w0*w1*(mu0-mu1)^2 over every
    candidate threshold; the background class is values <= threshold,
    the foreground strictly greater. Ties pick the lowest threshold.
    Arithmetic is exact (integers, or Fractions for non-integer counts)
    so the result matches exhaustive search with no float hazards.
    """
    hist = np.asarray(histogram)
    if hist.ndim != 1 or hist.size < 2:
        raise ContractError(f"histogram must be 1-d with >= 2 bins, got shape {hist.shape}")
    if hist.size and float(hist.min()) < 0:
        raise ContractError("histogram counts must be non-negative")
    nonzero = np.nonzero(hist)[0]
    if nonzero.size == 0:
        raise ContractError("histogram must contain at least one count")
    lo, hi = int(nonzero[0]), int(nonzero[-1])
    if lo == hi:
        raise DegenerateHistogramError(f"all mass in bin {lo}; nothing to split")

    if hist.dtype.kind in "iu":
        counts = [int(c) for c in hist]
    elif np.all(hist == np.floor(hist)):
        counts = [int(c) for c in hist]
    else:
        counts = [Fraction(float(c)) for c in hist]

    total_w = sum(counts)
    total_s = sum(v * c for v, c in enumerate(counts))

    best_t = -1
    best_num = -1  # (s0*w1 - s1*w0)^2
    best_den = 1  # w0*w1
    w0 = counts[0] * 0  # zero of the right numeric type
    s0 = w0
    for t in range(lo, hi):
        # bins below lo are empty, so accumulating from lo covers 0..t
        w0 = w0 + counts[t]
        s0 = s0 + t * counts[t]
        w1 = total_w - w0
        s1 = total_s - s0
        diff = s0 * w1 - s1 * w0
        num = diff * diff
        den = w0 * w1
        # compare num/den > best_num/best_den by cross-multiplication
        if best_t < 0 or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den

    variance = Fraction(best_num) / (Fraction(best_den) * Fraction(total_w) ** 2)
    return OtsuResult(threshold=best_t, between_class_variance=float(variance))


def threshold_mask(sums: GrayMap, threshold: int) -> FovMask:
    """Foreground = map values strictly greater than the threshold."""
    return FovMask(width=sums.width, height=sums.height, bits=sums.data > threshold)


def fill_holes(mask: FovMask) -> FovMask:
    """Convert background regions not 4-connected to the border into foreground."""
    filled = kernels.fill_holes(np.asarray(mask.bits))
    return FovMask(width=mask.width, height=mask.height, bits=filled)


def estimate_fov(image: RasterImage) -> FovMask:
    """Estimate the field-of-view mask of a fundus photograph.

    Channel sums are split with an Otsu threshold and enclosed holes
    are filled. Images whose sums cannot be split into two classes
    raise FovEstimationError.
    """
    sums = channel_sum_map(image)
    hist = sum_histogram(sums)
    try:
        split = otsu_threshold(hist)
    except DegenerateHistogramError as exc:
        raise FovEstimationError(f"cannot separate FOV from background: {exc}") from exc
    mask = threshold_mask(sums, split.threshold)
    if not mask.bits.any():
        raise FovEstimationError("estimated foreground is empty")
    return fill_holes(mask)


def bounding_box(mask: FovMask) -> BBox:
    """Minimal axis-aligned rectangle containing all foreground pixels."""
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise EmptyMaskError("cannot bound an empty mask")
    return BBox(
        row_min=int(rows.min()),
        row_max=int(rows.max()),
        col_min=int(cols.min()),
        col_max=int(cols.max()),
    )


def _hull_vertices(points: np.ndarray) -> list[tuple[int, int]]:
    """Monotone-chain convex hull; points are (x, y) int pairs, output CCW."""
    pts = sorted({(int(x), int(y)) for x, y in points})
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def convex_hull_mask(mask: FovMask) -> FovMask:
    """Rasterized convex hull of the foreground pixels.

    The hull polygon through foreground pixel centers is filled one scan
    row at a time: each row takes the span between the leftmost and
    rightmost edge crossings, rounded to the nearest pixel center. The
    result is OR-ed with the input so it is always a superset.
    """
    bits = np.asarray(mask.bits)
    row_any = bits.any(axis=1)
    if not row_any.any():
        raise EmptyMaskError("cannot hull an empty mask")

    # only each row's leftmost/rightmost pixels can be hull vertices
    rows = np.nonzero(row_any)[0]
    first = np.argmax(bits[rows], axis=1)
    last = bits.shape[1] - 1 - np.argmax(bits[rows, ::-1], axis=1)
    candidates = np.concatenate([
        np.column_stack([first, rows]),
        np.column_stack([last, rows]),
    ])
    verts = _hull_vertices(candidates)
    out = np.array(bits, dtype=bool)
    n = len(verts)
    if n == 1:
        x, y = verts[0]
        out[y, x] = True
        return FovMask(width=mask.width, height=mask.height, bits=out)

    y_lo = min(v[1] for v in verts)
    y_hi = max(v[1] for v in verts)
    half = Fraction(1, 2)
    xmin: dict[int, Fraction] = {}
    xmax: dict[int, Fraction] = {}
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if y0 == y1:
            lo_x, hi_x = (x0, x1) if x0 <= x1 else (x1, x0)
            lo_f, hi_f = Fraction(lo_x), Fraction(hi_x)
            prev = xmin.get(y0)
            if prev is None or lo_f < prev:
                xmin[y0] = lo_f
            prev = xmax.get(y0)
            if prev is None or hi_f > prev:
                xmax[y0] = hi_f
            continue
        y_a, y_b = (y0, y1) if y0 < y1 else (y1, y0)
        for y in range(y_a, y_b + 1):
            x = Fraction(x0 * (y1 - y0) + (x1 - x0) * (y - y0), y1 - y0)
            prev = xmin.get(y)
            if prev is None or x < prev:
                xmin[y] = x
            prev = xmax.get(y)
            if prev is None or x > prev:
                xmax[y] = x

    for y in range(y_lo, y_hi + 1):
        left = floor(xmin[y] + half)
        right = floor(xmax[y] + half)
        out[y, left:right + 1] = True

    return FovMask(width=mask.width, height=mask.height, bits=out)
