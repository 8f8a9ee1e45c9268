"""
Network - numpy U-Net with exact backpropagation, Adam and the model file format
"""

from expomask.network.checkpoint import load_model, save_model
from expomask.network.optimizer import AdamState, adam_step, init_adam
from expomask.network.unet import (
    DEFAULT_WIDTHS,
    NetMode,
    UNetParams,
    init_params,
    param_shapes,
    predict,
    unet_backward,
    unet_forward,
    unet_widths,
)

__all__ = [
    "DEFAULT_WIDTHS",
    "NetMode",
    "UNetParams",
    "init_params",
    "param_shapes",
    "predict",
    "unet_backward",
    "unet_forward",
    "unet_widths",
    "AdamState",
    "adam_step",
    "init_adam",
    "load_model",
    "save_model",
]
