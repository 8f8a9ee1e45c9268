"""
Training-related Pydantic models for ExpoMask.
"""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from expomask.models.image import ExposureClass, ThresholdRanges, parse_range
from expomask.models.report import MetricRow


class GtMethod(str, Enum):
    """How ground-truth masks are produced."""
    MANUAL = "manual"
    OTSU = "otsu"


class LossName(str, Enum):
    """Selectable training objectives."""
    BCE = "bce"
    FOCAL = "focal"
    DICE_BCE = "dice_bce"
    DICE = "dice"


class TrainConfig(BaseModel):
    """Training configuration. Defaults are desk-scale; full-scale values are noted."""
    exposure_class: ExposureClass = Field(ExposureClass.LOW, description="Which exposure the network maps")
    gt_method: GtMethod = Field(GtMethod.MANUAL, description="Ground truth when no gt_*.png exists")
    loss: LossName = Field(LossName.BCE, description="Training objective")
    lr: float = Field(0.001, ge=0, description="Adam learning rate")
    batch_size: int = Field(4, ge=1, description="Minibatch size (full scale: 32)")
    epochs: int = Field(200, ge=0, description="Training epochs (full scale: 50)")
    input_size: int = Field(64, gt=0, description="Square network input size (full scale: 512)")
    channel_scale: int = Field(1, ge=1, description="Divisor applied to the 16..256 U-Net widths")
    dropout_rate: float = Field(0.2, ge=0, lt=1, description="Dropout rate during training")
    seed: int = Field(0, ge=0, lt=2**64, description="Seed for init, shuffling and dropout")
    input_channels: int = Field(3, description="3 = RGB input, 1 = luminance input")
    low_range: Tuple[int, int] = Field((120, 255), description="Manual range for low exposure")
    high_range: Tuple[int, int] = Field((0, 200), description="Manual range for high exposure")

    @field_validator("input_size")
    @classmethod
    def _check_input_size(cls, value: int) -> int:
        if value % 16:
            raise ValueError(f"input_size must be divisible by 16, got {value}")
        return value

    @field_validator("channel_scale")
    @classmethod
    def _check_channel_scale(cls, value: int) -> int:
        if 16 % value:
            raise ValueError(f"channel_scale must divide 16, got {value}")
        return value

    @field_validator("input_channels")
    @classmethod
    def _check_input_channels(cls, value: int) -> int:
        if value not in (1, 3):
            raise ValueError(f"input_channels must be 1 or 3, got {value}")
        return value

    @field_validator("low_range", "high_range", mode="before")
    @classmethod
    def _parse_range(cls, value):
        return parse_range(value)

    @property
    def ranges(self) -> ThresholdRanges:
        return ThresholdRanges(low_range=self.low_range, high_range=self.high_range)


class TrainReport(BaseModel):
    """Outcome of one training run."""
    epoch_losses: List[float] = Field(default_factory=list)
    metrics: Optional[MetricRow] = None
    evaluated_split: str = "validation"
    roc_auc: Optional[float] = None
    train_samples: int = 0
    seconds: float = 0.0
    config: TrainConfig

    @model_validator(mode="after")
    def _check_epochs(self) -> "TrainReport":
        if len(self.epoch_losses) != self.config.epochs:
            raise ValueError(
                f"expected {self.config.epochs} epoch losses, got {len(self.epoch_losses)}"
            )
        return self
