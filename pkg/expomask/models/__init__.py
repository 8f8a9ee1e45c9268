"""
Models package for ExpoMask.
"""

from expomask.models.image import (
    BinaryMask,
    DatasetScan,
    ExposureClass,
    ExposureStack,
    ImageU8,
    LuminancePlane,
    SceneEntry,
    SynthSceneParams,
    ThresholdRanges,
)
from expomask.models.report import ConfusionCounts, CoverageRow, MetricRow
from expomask.models.training import GtMethod, LossName, TrainConfig, TrainReport

__all__ = [
    "BinaryMask",
    "DatasetScan",
    "ExposureClass",
    "ExposureStack",
    "ImageU8",
    "LuminancePlane",
    "SceneEntry",
    "SynthSceneParams",
    "ThresholdRanges",
    "ConfusionCounts",
    "CoverageRow",
    "MetricRow",
    "GtMethod",
    "LossName",
    "TrainConfig",
    "TrainReport",
]
