"""
Image-related Pydantic models for ExpoMask.
"""

from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ExposureClass(str, Enum):
    """Exposure of an LDR capture inside a stack."""
    LOW = "low"
    HIGH = "high"


class ImageU8(BaseModel):
    """H x W x C 8-bit LDR image, C in {1, 3}."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray

    @field_validator("data")
    @classmethod
    def _check_data(cls, data: np.ndarray) -> np.ndarray:
        if not isinstance(data, np.ndarray) or data.dtype != np.uint8:
            raise ValueError("image data must be a uint8 numpy array")
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"image data must be H x W x 1 or H x W x 3, got {data.shape}")
        return data

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])


class LuminancePlane(BaseModel):
    """H x W 8-bit luminance (Y of full-range YCbCr)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y: np.ndarray

    @field_validator("y")
    @classmethod
    def _check_y(cls, y: np.ndarray) -> np.ndarray:
        if not isinstance(y, np.ndarray) or y.dtype != np.uint8 or y.ndim != 2:
            raise ValueError("luminance must be a 2-D uint8 numpy array")
        return y

    @property
    def height(self) -> int:
        return int(self.y.shape[0])

    @property
    def width(self) -> int:
        return int(self.y.shape[1])


class BinaryMask(BaseModel):
    """H x W mask; 1 marks a well-exposed pixel."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    m: np.ndarray

    @field_validator("m")
    @classmethod
    def _check_m(cls, m: np.ndarray) -> np.ndarray:
        if not isinstance(m, np.ndarray) or m.ndim != 2:
            raise ValueError("mask must be a 2-D numpy array")
        if m.dtype != np.uint8:
            if not np.all((m == 0) | (m == 1)):
                raise ValueError("mask values must be 0 or 1")
            m = m.astype(np.uint8)
        elif m.size and m.max() > 1:
            raise ValueError("mask values must be 0 or 1")
        return m

    @property
    def height(self) -> int:
        return int(self.m.shape[0])

    @property
    def width(self) -> int:
        return int(self.m.shape[1])


def parse_range(value):
    """Accept an `A:B` string or a 2-sequence for an inclusive range."""
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 2:
            raise ValueError(f"range must look like A:B, got {value!r}")
        return int(parts[0]), int(parts[1])
    return value


class ThresholdRanges(BaseModel):
    """Inclusive luminance ranges that count as well exposed, per exposure class."""
    low_range: Tuple[int, int] = Field((120, 255), description="Range kept in low-exposure images")
    high_range: Tuple[int, int] = Field((0, 200), description="Range kept in high-exposure images")

    @field_validator("low_range", "high_range", mode="before")
    @classmethod
    def _parse_range(cls, value):
        return parse_range(value)

    @field_validator("low_range", "high_range")
    @classmethod
    def _check_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        lo, hi = value
        if not (0 <= lo <= hi <= 255):
            raise ValueError(f"range bounds must satisfy 0 <= lo <= hi <= 255, got {value}")
        return value

    def for_class(self, cls: ExposureClass) -> Tuple[int, int]:
        return self.low_range if ExposureClass(cls) is ExposureClass.LOW else self.high_range


class ExposureStack(BaseModel):
    """Low / medium / high exposure captures of one scene."""
    low: ImageU8
    mid: ImageU8
    high: ImageU8
    scene_id: str

    @model_validator(mode="after")
    def _check_shapes(self) -> "ExposureStack":
        shapes = {self.low.data.shape, self.mid.data.shape, self.high.data.shape}
        if len(shapes) != 1:
            raise ValueError(f"stack images must share one shape, got {sorted(shapes)}")
        return self

    def image_for(self, cls: ExposureClass) -> ImageU8:
        return self.low if ExposureClass(cls) is ExposureClass.LOW else self.high


class SynthSceneParams(BaseModel):
    """Parameters of the synthetic multi-exposure scene generator."""
    size: Tuple[int, int] = Field((64, 64), description="(height, width) in pixels")
    blob_count: int = Field(4, description="Number of Gaussian radiance blobs")
    noise_sigma: float = Field(2.0, description="Gaussian noise std in 8-bit sample units")
    exposure_scales: Tuple[float, float, float] = Field((0.1, 0.8, 4.0), description="Low, mid, high gains")
    gamma: float = Field(2.2, description="Display gamma applied after exposure")
    seed: int = Field(0, ge=0, lt=2**64, description="Generator seed")


class SceneEntry(BaseModel):
    """Files of one scene directory in a dataset."""
    scene_id: str
    low: Path
    mid: Path
    high: Path
    gt_low: Optional[Path] = None
    gt_mid: Optional[Path] = None
    gt_high: Optional[Path] = None

    def image_path(self, cls: ExposureClass) -> Path:
        return self.low if ExposureClass(cls) is ExposureClass.LOW else self.high

    def gt_path(self, cls: ExposureClass) -> Optional[Path]:
        return self.gt_low if ExposureClass(cls) is ExposureClass.LOW else self.gt_high


class DatasetScan(BaseModel):
    """Result of scanning a dataset root."""
    entries: List[SceneEntry] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
