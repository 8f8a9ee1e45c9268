"""
Domain errors raised by ExpoMask operations.
"""

from typing import Optional


class ExpoMaskError(Exception):
    """Base class for every ExpoMask domain error."""


class UnsupportedFormat(ExpoMaskError):
    """PNG is not 8-bit grayscale or RGB (16-bit, palette, alpha...)."""


class ImageIOError(ExpoMaskError, OSError):
    """Reading or writing an image or dataset failed."""


class InvalidParams(ExpoMaskError, ValueError):
    """Parameters violate their documented invariants."""


class EmptyPlane(ExpoMaskError):
    """Luminance plane has no pixels."""


class EmptyMask(ExpoMaskError):
    """Mask has no pixels."""


class DimensionMismatch(ExpoMaskError):
    """Two masks or planes do not share width and height."""


class ShapeMismatch(ExpoMaskError):
    """Tensor shapes are inconsistent for the requested operation."""


class OddExtent(ShapeMismatch):
    """2x2 max-pooling needs even height and width."""


class IndivisibleExtent(ShapeMismatch):
    """U-Net input height or width is not divisible by 16."""


class NonBinaryGroundTruth(ExpoMaskError):
    """Ground truth contains values other than 0 and 1."""


class EmptyDataset(ExpoMaskError):
    """No usable samples were found."""


class ModelFormatError(ExpoMaskError):
    """Model file is malformed or does not match the expected architecture."""


class NonFiniteLoss(ExpoMaskError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch: int, batch: int, value: Optional[float] = None):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"Non-finite loss {value} at epoch {epoch}, batch {batch}")
