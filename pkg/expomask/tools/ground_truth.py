"""
Ground-truth mask generation for well-exposed regions.

Two methods: fixed manual luminance ranges per exposure class, and Otsu's
global threshold with an exposure-dependent polarity. Masks are purely
per-pixel; no morphological cleanup is applied.
"""

from typing import Optional

import numpy as np

from expomask.errors import DimensionMismatch, EmptyMask, EmptyPlane
from expomask.models.image import BinaryMask, ExposureClass, LuminancePlane, ThresholdRanges
from expomask.models.training import GtMethod

LEVELS = 256


def manual_mask(
    y: LuminancePlane,
    cls: ExposureClass,
    ranges: Optional[ThresholdRanges] = None,
) -> BinaryMask:
    """
    Keep pixels whose luminance lies inside the class's inclusive range.

    Args:
        y: Luminance plane.
        cls: LOW uses ranges.low_range (default [120, 255]); HIGH uses
            ranges.high_range (default [0, 200]).
        ranges: Threshold ranges; defaults when omitted.

    Returns:
        BinaryMask with 1 on kept pixels.
    """
    ranges = ranges or ThresholdRanges()
    lo, hi = ranges.for_class(cls)
    return BinaryMask(m=((y.y >= lo) & (y.y <= hi)).astype(np.uint8))


def _histogram(y: LuminancePlane) -> np.ndarray:
    if y.y.size == 0:
        raise EmptyPlane("Cannot threshold an empty luminance plane")
    return np.bincount(y.y.ravel(), minlength=LEVELS)


def between_class_variance(y: LuminancePlane) -> np.ndarray:
    """
    w0(t) * w1(t) * (mu0(t) - mu1(t))^2 for every t in 0..255.

    Class 0 is {Y <= t}, class 1 is {Y > t}. Candidates where a class is
    empty get 0.
    """
    hist = _histogram(y).astype(np.float64)
    levels = np.arange(LEVELS, dtype=np.float64)
    total = hist.sum()
    n0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    n1 = total - n0
    s1 = s0[-1] - s0

    variance = np.zeros(LEVELS, dtype=np.float64)
    valid = (n0 > 0) & (n1 > 0)
    mu0 = s0[valid] / n0[valid]
    mu1 = s1[valid] / n1[valid]
    variance[valid] = (n0[valid] / total) * (n1[valid] / total) * (mu0 - mu1) ** 2
    return variance


def otsu_threshold(y: LuminancePlane) -> int:
    """
    Otsu's threshold over the 256-bin histogram.

    The score is compared in exact integer arithmetic:
    w0 w1 (mu0 - mu1)^2 = (S0 N - S n0)^2 / (N^2 n0 n1), and N^2 is common to
    every candidate, so candidates are ranked by (S0 N - S n0)^2 / (n0 n1)
    through cross-multiplication. Ties go to the smallest t. A constant
    plane returns its value.

    Args:
        y: Non-empty luminance plane.

    Returns:
        Threshold t in [0, 255].
    """
    hist = [int(count) for count in _histogram(y)]
    total = sum(hist)
    total_sum = sum(level * count for level, count in enumerate(hist))

    best_t: Optional[int] = None
    best_num, best_den = 0, 1
    n0 = 0
    s0 = 0
    for t in range(LEVELS):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (s0 * total - total_sum * n0) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den

    if best_t is None:
        # single-valued histogram
        return int(y.y.flat[0])
    return best_t


def otsu_mask(y: LuminancePlane, cls: ExposureClass) -> BinaryMask:
    """
    Otsu mask with exposure polarity.

    LOW keeps Y > t (bright detail in a dark capture); HIGH keeps Y < t (dark
    detail in a saturated capture). Pixels equal to t are never kept.
    """
    t = otsu_threshold(y)
    if ExposureClass(cls) is ExposureClass.LOW:
        kept = y.y > t
    else:
        kept = y.y < t
    return BinaryMask(m=kept.astype(np.uint8))


def generate_mask(
    y: LuminancePlane,
    cls: ExposureClass,
    method: GtMethod,
    ranges: Optional[ThresholdRanges] = None,
) -> BinaryMask:
    """Dispatch to manual_mask or otsu_mask."""
    if GtMethod(method) is GtMethod.MANUAL:
        return manual_mask(y, cls, ranges)
    return otsu_mask(y, cls)


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.m.shape != b.m.shape:
        raise DimensionMismatch(f"Mask shapes differ: {a.m.shape} vs {b.m.shape}")


def merge_masks(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels kept by either mask."""
    _check_same_dims(a, b)
    return BinaryMask(m=(a.m | b.m).astype(np.uint8))


def residual_mask(low_mask: BinaryMask, high_mask: BinaryMask) -> BinaryMask:
    """Pixels claimed by neither exposure, left for the medium exposure."""
    _check_same_dims(low_mask, high_mask)
    return BinaryMask(m=(1 - (low_mask.m | high_mask.m)).astype(np.uint8))


def mask_coverage(mask: BinaryMask) -> float:
    """Fraction of pixels set in the mask."""
    if mask.m.size == 0:
        raise EmptyMask("Coverage of an empty mask is undefined")
    return int(np.count_nonzero(mask.m)) / mask.m.size
