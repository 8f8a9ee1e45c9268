"""
Workflows package for ExpoMask.
"""

from expomask.workflows.coverage import compare_gt_methods, write_coverage_csv
from expomask.workflows.masks import write_gt_masks
from expomask.workflows.training import (
    TrainingWorkflow,
    build_training_set,
    evaluate,
    run_evaluation,
    run_training,
    split_dataset,
    train,
)

__all__ = [
    "compare_gt_methods",
    "write_coverage_csv",
    "write_gt_masks",
    "TrainingWorkflow",
    "build_training_set",
    "evaluate",
    "run_evaluation",
    "run_training",
    "split_dataset",
    "train",
]
