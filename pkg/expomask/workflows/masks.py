"""
Ground-truth writer behind `expomask gt`.
"""

import logging
from pathlib import Path
from typing import Optional

from expomask.errors import EmptyDataset, InvalidParams
from expomask.models.image import ExposureClass, ThresholdRanges
from expomask.models.training import GtMethod
from expomask.tools.color import luminance
from expomask.tools.ground_truth import generate_mask, residual_mask
from expomask.tools.image_io import load_png, save_mask, scan_dataset

logger = logging.getLogger(__name__)

EXPOSURES = ("low", "high", "mid")


def write_gt_masks(
    root: Path,
    method: GtMethod,
    exposure: str,
    ranges: Optional[ThresholdRanges] = None,
) -> int:
    """
    Write gt_<exposure>.png into every complete scene under root.

    Args:
        root: Dataset root.
        method: manual or otsu.
        exposure: "low", "high", or "mid" for the residual of the low and high masks.
        ranges: Manual ranges; defaults when omitted.

    Returns:
        Number of masks written.
    """
    if exposure not in EXPOSURES:
        raise InvalidParams(f"exposure must be one of {', '.join(EXPOSURES)}, got {exposure!r}")
    entries = scan_dataset(root).entries
    if not entries:
        raise EmptyDataset(f"No complete scenes under {root}")

    for entry in entries:
        if exposure == "mid":
            low = generate_mask(luminance(load_png(entry.low)), ExposureClass.LOW, method, ranges)
            high = generate_mask(luminance(load_png(entry.high)), ExposureClass.HIGH, method, ranges)
            mask = residual_mask(low, high)
        else:
            cls = ExposureClass(exposure)
            mask = generate_mask(luminance(load_png(entry.image_path(cls))), cls, method, ranges)
        save_mask(mask, entry.low.parent / f"gt_{exposure}.png")
    logger.info("Wrote %d %s gt_%s masks under %s", len(entries), GtMethod(method).value, exposure, root)
    return len(entries)
