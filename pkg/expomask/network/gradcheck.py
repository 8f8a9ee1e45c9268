"""
Finite-difference gradient checks.

Every check compares backprop against central differences
(f(w + h) - f(w - h)) / 2h on a scalar objective and reports the worst
relative error |a - n| / max(|a|, |n|, 1e-6).
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from expomask.network import layers
from expomask.network.unet import NetMode, UNetParams, activation_pattern, init_params, unet_backward, unet_forward
from expomask.tools.losses import LOSSES

logger = logging.getLogger(__name__)

LAYER_STEP = 1e-5
LAYER_TOLERANCE = 1e-4
LOSS_STEP = 1e-6
LOSS_TOLERANCE = 1e-6
REL_FLOOR = 1e-6


class GradCheckResult(BaseModel):
    """Outcome of one gradient check."""
    name: str
    checked: int
    skipped: int = 0
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def rel_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def _check_arrays(
    name: str,
    objective: Callable[[], float],
    arrays: Dict[str, np.ndarray],
    analytic: Dict[str, np.ndarray],
    h: float,
    tolerance: float,
    rng: np.random.Generator,
    per_array: Optional[int] = None,
) -> GradCheckResult:
    """
    Perturb entries of `arrays` in place (restored afterwards) and compare
    the central difference of `objective` with `analytic`.
    """
    worst = 0.0
    checked = 0
    for key, array in arrays.items():
        flat = array.reshape(-1)
        indices = np.arange(flat.size)
        if per_array is not None and flat.size > per_array:
            indices = rng.choice(flat.size, size=per_array, replace=False)
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            plus = objective()
            flat[index] = original - h
            minus = objective()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, rel_error(float(analytic[key].reshape(-1)[index]), numeric))
            checked += 1
    return GradCheckResult(name=name, checked=checked, max_rel_error=worst, tolerance=tolerance)


# ==================== Layers ====================

def _check_conv(rng: np.random.Generator, k: int) -> GradCheckResult:
    x = rng.normal(size=(2, 5, 6, 3))
    kernel = rng.normal(size=(k, k, 3, 4))
    bias = rng.normal(size=4)
    r = rng.normal(size=(2, 5, 6, 4))
    dx, dk, db = layers.conv2d_backward(x, kernel, r)
    return _check_arrays(
        f"conv2d {k}x{k}",
        lambda: float(np.sum(layers.conv2d(x, kernel, bias) * r)),
        {"x": x, "kernel": kernel, "bias": bias},
        {"x": dx, "kernel": dk, "bias": db},
        LAYER_STEP, LAYER_TOLERANCE, rng, per_array=40,
    )


def _check_upconv(rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(size=(2, 3, 4, 3))
    kernel = rng.normal(size=(3, 3, 3, 2))
    bias = rng.normal(size=2)
    r = rng.normal(size=(2, 6, 8, 2))
    dx, dk, db = layers.upconv2_backward(x, kernel, r)
    return _check_arrays(
        "upconv2",
        lambda: float(np.sum(layers.upconv2(x, kernel, bias) * r)),
        {"x": x, "kernel": kernel, "bias": bias},
        {"x": dx, "kernel": dk, "bias": db},
        LAYER_STEP, LAYER_TOLERANCE, rng, per_array=40,
    )


def _check_relu(rng: np.random.Generator) -> GradCheckResult:
    # magnitudes >= 0.1 keep every entry clear of the kink at 0
    x = rng.uniform(0.1, 1.0, size=(2, 4, 4, 3)) * rng.choice([-1.0, 1.0], size=(2, 4, 4, 3))
    r = rng.normal(size=x.shape)
    return _check_arrays(
        "relu",
        lambda: float(np.sum(layers.relu(x) * r)),
        {"x": x},
        {"x": layers.relu_backward(x, r)},
        LAYER_STEP, LAYER_TOLERANCE, rng,
    )


def _check_sigmoid(rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(scale=3.0, size=(2, 4, 4, 1))
    r = rng.normal(size=x.shape)
    return _check_arrays(
        "sigmoid",
        lambda: float(np.sum(layers.sigmoid(x) * r)),
        {"x": x},
        {"x": layers.sigmoid_backward(layers.sigmoid(x), r)},
        LAYER_STEP, LAYER_TOLERANCE, rng,
    )


def _check_maxpool(rng: np.random.Generator) -> GradCheckResult:
    # distinct values 0.01 apart so no perturbation changes a window's winner
    shape = (2, 4, 6, 3)
    x = rng.permutation(int(np.prod(shape))).reshape(shape) * 0.01
    r = rng.normal(size=(2, 2, 3, 3))
    _, argmax = layers.maxpool2(x)
    return _check_arrays(
        "maxpool2",
        lambda: float(np.sum(layers.maxpool2(x)[0] * r)),
        {"x": x},
        {"x": layers.maxpool2_backward(argmax, r)},
        LAYER_STEP, LAYER_TOLERANCE, rng,
    )


def _check_concat(rng: np.random.Generator) -> GradCheckResult:
    a = rng.normal(size=(2, 3, 3, 2))
    b = rng.normal(size=(2, 3, 3, 3))
    r = rng.normal(size=(2, 3, 3, 5))
    da, db = layers.concat_channels_backward(2, r)
    return _check_arrays(
        "concat_channels",
        lambda: float(np.sum(layers.concat_channels(a, b) * r)),
        {"a": a, "b": b},
        {"a": da, "b": db},
        LAYER_STEP, LAYER_TOLERANCE, rng,
    )


def _check_dropout(rng: np.random.Generator) -> GradCheckResult:
    x = rng.normal(size=(2, 4, 4, 3))
    r = rng.normal(size=x.shape)
    # a fresh generator per call reproduces the same mask
    _, mask = layers.dropout(x, 0.3, np.random.default_rng(7))
    return _check_arrays(
        "dropout",
        lambda: float(np.sum(layers.dropout(x, 0.3, np.random.default_rng(7))[0] * r)),
        {"x": x},
        {"x": layers.dropout_backward(mask, r)},
        LAYER_STEP, LAYER_TOLERANCE, rng,
    )


def check_layers(seed: int = 0) -> List[GradCheckResult]:
    """Check every layer kernel in isolation."""
    rng = np.random.default_rng(seed)
    return [
        _check_conv(rng, 3),
        _check_conv(rng, 1),
        _check_upconv(rng),
        _check_relu(rng),
        _check_sigmoid(rng),
        _check_maxpool(rng),
        _check_concat(rng),
        _check_dropout(rng),
    ]


# ==================== Full network ====================

def _sample_positions(
    params: UNetParams,
    samples: int,
    rng: np.random.Generator,
) -> List[Tuple[str, int]]:
    """One position in every tensor, the rest uniform over all parameters."""
    names = params.names()
    positions = [(name, int(rng.integers(params[name].size))) for name in names]
    sizes = np.array([params[name].size for name in names])
    owners = rng.choice(len(names), size=max(samples - len(names), 0), p=sizes / sizes.sum())
    positions.extend((names[i], int(rng.integers(sizes[i]))) for i in owners)
    return positions


def check_unet(
    channel_scale: int = 8,
    samples: int = 120,
    extent: int = 16,
    seed: int = 0,
    max_attempts: int = 20,
) -> GradCheckResult:
    """
    End-to-end check of unet_backward at toy size in eval mode.

    The objective is mean(output * r) for a fixed random r. A sampled
    parameter whose +h or -h perturbation flips any ReLU or max-pool
    decision is redrawn, up to max_attempts times.
    """
    rng = np.random.default_rng(seed)
    params = init_params(seed=seed, channel_scale=channel_scale)
    # small positive biases keep fewer pre-activations sitting exactly at 0
    for name in params.names():
        if name.endswith(".bias"):
            params.tensors[name][...] = rng.uniform(0.01, 0.1, size=params[name].shape)
    x = rng.uniform(0.0, 1.0, size=(1, extent, extent, params.input_channels))
    r = rng.normal(size=(1, extent, extent, 1))
    mode = NetMode.eval()

    def objective() -> Tuple[float, bytes]:
        out, cache = unet_forward(params, x, mode, return_cache=True)
        return float(np.mean(out * r)), activation_pattern(cache)

    _, base_pattern = objective()
    grads = unet_backward(params, x, mode, r / r.size)

    worst = 0.0
    checked = 0
    skipped = 0
    for name, index in _sample_positions(params, samples, rng):
        for _ in range(max_attempts):
            flat = params.tensors[name].reshape(-1)
            original = flat[index]
            flat[index] = original + LAYER_STEP
            plus, plus_pattern = objective()
            flat[index] = original - LAYER_STEP
            minus, minus_pattern = objective()
            flat[index] = original
            if plus_pattern == base_pattern and minus_pattern == base_pattern:
                numeric = (plus - minus) / (2.0 * LAYER_STEP)
                worst = max(worst, rel_error(float(grads[name].reshape(-1)[index]), numeric))
                checked += 1
                break
            skipped += 1
            index = int(rng.integers(params[name].size))
    logger.debug("U-Net gradcheck: %d checked, %d redrawn", checked, skipped)
    return GradCheckResult(
        name=f"unet (channel_scale={channel_scale}, {extent}x{extent})",
        checked=checked,
        skipped=skipped,
        max_rel_error=worst,
        tolerance=LAYER_TOLERANCE,
    )


# ==================== Losses ====================

def check_losses(seed: int = 0) -> List[GradCheckResult]:
    """Check every loss gradient with predictions in (0.05, 0.95)."""
    rng = np.random.default_rng(seed)
    results = []
    for loss_name, loss in LOSSES.items():
        y = rng.integers(0, 2, size=(2, 4, 4, 1)).astype(np.float64)
        y_hat = rng.uniform(0.05, 0.95, size=y.shape)
        _, grad = loss(y, y_hat)
        results.append(
            _check_arrays(
                f"loss {loss_name.value}",
                lambda: loss(y, y_hat)[0],
                {"y_hat": y_hat},
                {"y_hat": grad},
                LOSS_STEP, LOSS_TOLERANCE, rng,
            )
        )
    return results


def run_gradcheck(channel_scale: int = 8, samples: int = 120, seed: int = 0) -> List[GradCheckResult]:
    """Run the layer, loss and full-network checks."""
    results = check_layers(seed) + check_losses(seed)
    results.append(check_unet(channel_scale=channel_scale, samples=samples, seed=seed))
    for result in results:
        logger.info(
            "%s: %s (%d checked, max rel. error %.3e)",
            result.name, "ok" if result.passed else "FAILED", result.checked, result.max_rel_error,
        )
    return results
