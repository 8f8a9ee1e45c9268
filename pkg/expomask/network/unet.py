"""
U-Net for well-exposed region segmentation.

Encoder: five blocks of conv-relu, conv-relu, dropout; blocks 1-4 end in a
2x2 max-pool, block 5 is the bottleneck. Decoder: four blocks of transpose
conv, concat with the matching encoder skip, conv-relu, dropout, conv-relu.
Head: 1x1 conv and sigmoid. Same padding everywhere, so H and W must be
divisible by 16.
"""

from collections import OrderedDict
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from expomask.errors import IndivisibleExtent, ShapeMismatch
from expomask.network import layers

DEFAULT_WIDTHS: Tuple[int, ...] = (16, 32, 64, 128, 256)
ENCODER_BLOCKS = 5
DECODER_BLOCKS = 4
EXTENT_DIVISOR = 2 ** DECODER_BLOCKS


def unet_widths(channel_scale: int = 1) -> Tuple[int, ...]:
    """Encoder widths with every default width divided by channel_scale."""
    widths = tuple(w // channel_scale for w in DEFAULT_WIDTHS)
    if min(widths) < 1:
        raise ShapeMismatch(f"channel_scale {channel_scale} leaves a block without channels")
    return widths


def param_shapes(widths: Tuple[int, ...], input_channels: int) -> "OrderedDict[str, Tuple[int, ...]]":
    """Ordered parameter names and shapes for a U-Net of the given widths."""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    c_in = input_channels
    for i, width in enumerate(widths, start=1):
        shapes[f"enc{i}.conv1.kernel"] = (3, 3, c_in, width)
        shapes[f"enc{i}.conv1.bias"] = (width,)
        shapes[f"enc{i}.conv2.kernel"] = (3, 3, width, width)
        shapes[f"enc{i}.conv2.bias"] = (width,)
        c_in = width
    for j in range(1, DECODER_BLOCKS + 1):
        width = widths[ENCODER_BLOCKS - 1 - j]
        shapes[f"dec{j}.up.kernel"] = (3, 3, c_in, width)
        shapes[f"dec{j}.up.bias"] = (width,)
        shapes[f"dec{j}.conv1.kernel"] = (3, 3, 2 * width, width)
        shapes[f"dec{j}.conv1.bias"] = (width,)
        shapes[f"dec{j}.conv2.kernel"] = (3, 3, width, width)
        shapes[f"dec{j}.conv2.bias"] = (width,)
        c_in = width
    shapes["head.kernel"] = (1, 1, c_in, 1)
    shapes["head.bias"] = (1,)
    return shapes


class UNetParams(BaseModel):
    """Named U-Net tensors (weights, or gradients shaped like them)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tensors: Dict[str, np.ndarray]
    widths: Tuple[int, ...] = DEFAULT_WIDTHS
    input_channels: int = 3

    @model_validator(mode="after")
    def _check_shapes(self) -> "UNetParams":
        if len(self.widths) != ENCODER_BLOCKS:
            raise ValueError(f"expected {ENCODER_BLOCKS} encoder widths, got {self.widths}")
        expected = param_shapes(self.widths, self.input_channels)
        if list(self.tensors) != list(expected):
            raise ValueError("tensor names do not follow the U-Net layout")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")
        return self

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> List[str]:
        return list(self.tensors)

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "UNetParams":
        ordered = OrderedDict((name, tensors[name]) for name in self.tensors)
        return UNetParams(tensors=ordered, widths=self.widths, input_channels=self.input_channels)

    def copy(self) -> "UNetParams":
        return self.with_tensors({name: t.copy() for name, t in self.tensors.items()})

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())


class NetMode(BaseModel):
    """Train mode applies seeded dropout; eval mode is deterministic and dropout-free."""
    training: bool = False
    dropout_rate: float = Field(0.0, ge=0, lt=1)
    seed: int = Field(0, ge=0, lt=2**64)

    @classmethod
    def train(cls, dropout_rate: float = 0.2, seed: int = 0) -> "NetMode":
        return cls(training=True, dropout_rate=dropout_rate, seed=seed)

    @classmethod
    def eval(cls) -> "NetMode":
        return cls()

    def rng(self) -> Optional[np.random.Generator]:
        if not self.training or self.dropout_rate == 0.0:
            return None
        return np.random.default_rng(self.seed)


def init_params(seed: int = 0, channel_scale: int = 1, input_channels: int = 3) -> UNetParams:
    """
    He-normal initialization (std = sqrt(2 / fan_in)) with zero biases.

    Args:
        seed: Generator seed; equal seeds give bit-identical parameters.
        channel_scale: Divisor of the 16..256 widths.
        input_channels: 3 for RGB input, 1 for luminance.
    """
    widths = unet_widths(channel_scale)
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in param_shapes(widths, input_channels).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return UNetParams(tensors=tensors, widths=widths, input_channels=input_channels)


# ==================== Forward ====================

def _check_input(params: UNetParams, x: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeMismatch(f"network input must be N x H x W x C, got {x.shape}")
    _, h, w, c = x.shape
    if h % EXTENT_DIVISOR or w % EXTENT_DIVISOR:
        raise IndivisibleExtent(f"input extent {h} x {w} is not divisible by {EXTENT_DIVISOR}")
    if c != params.input_channels:
        raise ShapeMismatch(f"network expects {params.input_channels} input channels, got {c}")


def unet_forward(
    params: UNetParams,
    x: np.ndarray,
    mode: Optional[NetMode] = None,
    return_cache: bool = False,
):
    """
    Run the network.

    Args:
        params: Network parameters.
        x: Input [N, H, W, C] with H, W divisible by 16.
        mode: NetMode; eval when omitted.
        return_cache: Also return the activations unet_backward needs.

    Returns:
        Output [N, H, W, 1] in (0, 1), or (output, cache) with return_cache.
    """
    mode = mode or NetMode.eval()
    x = np.asarray(x, dtype=np.float64)
    _check_input(params, x)
    rng = mode.rng()
    rate = mode.dropout_rate

    cache: Dict[str, Any] = {"x": x, "encoder": [], "decoder": []}
    h = x
    skips = []
    for i in range(1, ENCODER_BLOCKS + 1):
        block: Dict[str, Any] = {"input": h}
        block["a1"] = layers.conv2d(h, params[f"enc{i}.conv1.kernel"], params[f"enc{i}.conv1.bias"])
        block["r1"] = layers.relu(block["a1"])
        block["a2"] = layers.conv2d(block["r1"], params[f"enc{i}.conv2.kernel"], params[f"enc{i}.conv2.bias"])
        d, block["drop"] = layers.dropout(layers.relu(block["a2"]), rate, rng)
        if i < ENCODER_BLOCKS:
            skips.append(d)
            h, block["argmax"] = layers.maxpool2(d)
        else:
            h = d
        cache["encoder"].append(block)

    for j in range(1, DECODER_BLOCKS + 1):
        block = {"input": h}
        up = layers.upconv2(h, params[f"dec{j}.up.kernel"], params[f"dec{j}.up.bias"])
        block["up_channels"] = up.shape[-1]
        block["cat"] = layers.concat_channels(up, skips[ENCODER_BLOCKS - 1 - j])
        block["a1"] = layers.conv2d(block["cat"], params[f"dec{j}.conv1.kernel"], params[f"dec{j}.conv1.bias"])
        block["d1"], block["drop"] = layers.dropout(layers.relu(block["a1"]), rate, rng)
        block["a2"] = layers.conv2d(block["d1"], params[f"dec{j}.conv2.kernel"], params[f"dec{j}.conv2.bias"])
        h = layers.relu(block["a2"])
        cache["decoder"].append(block)

    cache["features"] = h
    out = layers.sigmoid(layers.conv2d(h, params["head.kernel"], params["head.bias"]))
    cache["out"] = out
    if return_cache:
        return out, cache
    return out


# ==================== Backward ====================

def unet_backward(
    params: UNetParams,
    x: np.ndarray,
    mode: Optional[NetMode],
    upstream_grad: np.ndarray,
    cache: Optional[Dict[str, Any]] = None,
) -> UNetParams:
    """
    Exact gradients of sum(output * upstream_grad) with respect to every parameter.

    Without a cache the forward pass is recomputed; the mode's seed then
    reproduces the same dropout masks.

    Returns:
        UNetParams holding the gradients.
    """
    if cache is None:
        _, cache = unet_forward(params, x, mode, return_cache=True)
    out = cache["out"]
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != out.shape:
        raise ShapeMismatch(f"upstream gradient {upstream_grad.shape} does not match output {out.shape}")

    grads: Dict[str, np.ndarray] = {}

    g = layers.sigmoid_backward(out, upstream_grad)
    g, grads["head.kernel"], grads["head.bias"] = layers.conv2d_backward(cache["features"], params["head.kernel"], g)

    skip_grads: List[Optional[np.ndarray]] = [None] * (ENCODER_BLOCKS - 1)
    for j in range(DECODER_BLOCKS, 0, -1):
        block = cache["decoder"][j - 1]
        g = layers.relu_backward(block["a2"], g)
        g, grads[f"dec{j}.conv2.kernel"], grads[f"dec{j}.conv2.bias"] = layers.conv2d_backward(
            block["d1"], params[f"dec{j}.conv2.kernel"], g
        )
        g = layers.relu_backward(block["a1"], layers.dropout_backward(block["drop"], g))
        g, grads[f"dec{j}.conv1.kernel"], grads[f"dec{j}.conv1.bias"] = layers.conv2d_backward(
            block["cat"], params[f"dec{j}.conv1.kernel"], g
        )
        g, skip_grads[ENCODER_BLOCKS - 1 - j] = layers.concat_channels_backward(block["up_channels"], g)
        g, grads[f"dec{j}.up.kernel"], grads[f"dec{j}.up.bias"] = layers.upconv2_backward(
            block["input"], params[f"dec{j}.up.kernel"], g
        )

    for i in range(ENCODER_BLOCKS, 0, -1):
        block = cache["encoder"][i - 1]
        if i < ENCODER_BLOCKS:
            g = layers.maxpool2_backward(block["argmax"], g) + skip_grads[i - 1]
        g = layers.relu_backward(block["a2"], layers.dropout_backward(block["drop"], g))
        g, grads[f"enc{i}.conv2.kernel"], grads[f"enc{i}.conv2.bias"] = layers.conv2d_backward(
            block["r1"], params[f"enc{i}.conv2.kernel"], g
        )
        g = layers.relu_backward(block["a1"], g)
        g, grads[f"enc{i}.conv1.kernel"], grads[f"enc{i}.conv1.bias"] = layers.conv2d_backward(
            block["input"], params[f"enc{i}.conv1.kernel"], g
        )

    return params.with_tensors(grads)


def activation_pattern(cache: Dict[str, Any]) -> bytes:
    """
    Every ReLU on/off decision and max-pool winner of a forward pass, packed.

    Two forward passes with equal patterns are on the same linear piece of
    the network, which central differences need.
    """
    parts = []
    for block in cache["encoder"]:
        parts.append(np.packbits(block["a1"] > 0).tobytes())
        parts.append(np.packbits(block["a2"] > 0).tobytes())
        if "argmax" in block:
            parts.append(block["argmax"].astype(np.uint8).tobytes())
    for block in cache["decoder"]:
        parts.append(np.packbits(block["a1"] > 0).tobytes())
        parts.append(np.packbits(block["a2"] > 0).tobytes())
    return b"".join(parts)


def predict(params: UNetParams, x: np.ndarray, batch_size: int = 4) -> np.ndarray:
    """Eval-mode forward over x in minibatches."""
    outputs = [
        unet_forward(params, x[start:start + batch_size], NetMode.eval())
        for start in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(outputs, axis=0)
