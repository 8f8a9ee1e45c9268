"""
Coverage Comparison
Per-scene coverage of manual vs. Otsu ground truth for the low, high, merged and residual masks.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional

from expomask.models.image import BinaryMask, ExposureClass, ImageU8, ThresholdRanges
from expomask.models.report import CoverageRow
from expomask.models.training import GtMethod
from expomask.tools.color import luminance
from expomask.tools.ground_truth import generate_mask, mask_coverage, merge_masks, residual_mask
from expomask.tools.image_io import load_png, scan_dataset

logger = logging.getLogger(__name__)

COVERAGE_COLUMNS = ["scene_id", "method", "exposure", "coverage"]


def exposure_masks(
    low: ImageU8,
    high: ImageU8,
    method: GtMethod,
    ranges: Optional[ThresholdRanges] = None,
) -> Dict[str, BinaryMask]:
    """Low, high, merged (low OR high) and residual (neither) masks of one scene."""
    low_mask = generate_mask(luminance(low), ExposureClass.LOW, method, ranges)
    high_mask = generate_mask(luminance(high), ExposureClass.HIGH, method, ranges)
    return {
        "low": low_mask,
        "high": high_mask,
        "merged": merge_masks(low_mask, high_mask),
        "residual": residual_mask(low_mask, high_mask),
    }


def scene_coverage(
    scene_id: str,
    low: ImageU8,
    high: ImageU8,
    ranges: Optional[ThresholdRanges] = None,
) -> List[CoverageRow]:
    """Coverage rows of one scene for both methods."""
    rows = []
    for method in GtMethod:
        for exposure, mask in exposure_masks(low, high, method, ranges).items():
            rows.append(
                CoverageRow(
                    scene_id=scene_id,
                    method=method.value,
                    exposure=exposure,
                    coverage=mask_coverage(mask),
                )
            )
    return rows


def compare_gt_methods(root: Path, ranges: Optional[ThresholdRanges] = None) -> List[CoverageRow]:
    """
    Coverage table of every scene under root.

    Args:
        root: Dataset root.
        ranges: Manual ranges; defaults when omitted.

    Returns:
        Rows ordered by scene, then method (manual, otsu), then
        exposure (low, high, merged, residual).
    """
    rows = []
    for entry in scan_dataset(root).entries:
        rows.extend(scene_coverage(entry.scene_id, load_png(entry.low), load_png(entry.high), ranges))
    logger.info("Computed %d coverage rows under %s", len(rows), root)
    return rows


def write_coverage_csv(rows: List[CoverageRow], path: Path) -> None:
    """Write rows as CSV with six-decimal coverage."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COVERAGE_COLUMNS)
        for row in rows:
            writer.writerow([row.scene_id, row.method, row.exposure, f"{row.coverage:.6f}"])
