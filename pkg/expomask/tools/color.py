"""
Luminance extraction: full-range BT.601 Y, the plane all thresholding works on.
"""

import numpy as np

from expomask.models.image import ImageU8, LuminancePlane

# BT.601 luma weights in thousandths, so rounding can be done in exact integers
_WEIGHTS_MILLI = (299, 587, 114)


def luminance_array(rgb: np.ndarray) -> np.ndarray:
    """
    Y = round_half_up(0.299 R + 0.587 G + 0.114 B) on an H x W x 3 uint8 array.

    The weights sum to 1000/1000, so R = G = B = v gives Y = v exactly and
    the result never leaves [0, 255].
    """
    channels = rgb.astype(np.int32)
    wr, wg, wb = _WEIGHTS_MILLI
    weighted = wr * channels[..., 0] + wg * channels[..., 1] + wb * channels[..., 2]
    return ((weighted + 500) // 1000).astype(np.uint8)


def luminance(image: ImageU8) -> LuminancePlane:
    """
    Luminance plane of an image.

    Args:
        image: 1- or 3-channel image. A single channel is returned unchanged.

    Returns:
        LuminancePlane of the same width and height.
    """
    if image.channels == 1:
        return LuminancePlane(y=image.data[:, :, 0].copy())
    return LuminancePlane(y=luminance_array(image.data))
