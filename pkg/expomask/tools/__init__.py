"""
Tools package for ExpoMask: pure image, mask, loss and metric operations.
"""

from expomask.tools.color import luminance
from expomask.tools.ground_truth import (
    generate_mask,
    manual_mask,
    mask_coverage,
    merge_masks,
    otsu_mask,
    otsu_threshold,
    residual_mask,
)
from expomask.tools.image_io import load_png, save_png, scan_dataset, synth_stack
from expomask.tools.losses import bce, dice_bce, dice_loss, focal, get_loss
from expomask.tools.metrics import (
    auc_balanced,
    binarize,
    confusion,
    dice_index,
    jaccard_index,
    metric_row,
    sensitivity,
    specificity,
)

__all__ = [
    "luminance",
    "generate_mask",
    "manual_mask",
    "mask_coverage",
    "merge_masks",
    "otsu_mask",
    "otsu_threshold",
    "residual_mask",
    "load_png",
    "save_png",
    "scan_dataset",
    "synth_stack",
    "bce",
    "dice_bce",
    "dice_loss",
    "focal",
    "get_loss",
    "auc_balanced",
    "binarize",
    "confusion",
    "dice_index",
    "jaccard_index",
    "metric_row",
    "sensitivity",
    "specificity",
]
