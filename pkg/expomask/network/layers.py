"""
Layer kernels with exact reverse-mode gradients.

Tensors are float64 numpy arrays in NHWC layout. Each layer is a pair of
plain functions: the forward returns whatever the backward needs besides
its own inputs (argmax indices, dropout masks).
"""

from typing import Optional, Tuple

import numpy as np

from expomask.errors import OddExtent, ShapeMismatch

# sigmoid output stays inside [SIGMOID_EPS, 1 - SIGMOID_EPS]
SIGMOID_EPS = 1e-7


# ==================== Convolution ====================

def _check_conv_shapes(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeMismatch(f"conv input must be N x H x W x C, got {x.shape}")
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise ShapeMismatch(f"conv kernel must be k x k x Cin x Cout with odd k, got {kernel.shape}")
    if kernel.shape[2] != x.shape[3]:
        raise ShapeMismatch(f"kernel expects {kernel.shape[2]} input channels, input has {x.shape[3]}")
    if bias.shape != (kernel.shape[3],):
        raise ShapeMismatch(f"bias must have shape ({kernel.shape[3]},), got {bias.shape}")


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Same-padded, stride-1 cross-correlation.

    out[n, i, j, co] = bias[co] + sum x[n, i+di-p, j+dj-p, ci] * kernel[di, dj, ci, co]
    with p = k // 2 and zeros outside the input.

    Args:
        x: Input [N, H, W, Cin].
        kernel: Weights [k, k, Cin, Cout], k odd (3 for the U-Net, 1 for the head).
        bias: [Cout].

    Returns:
        [N, H, W, Cout].
    """
    _check_conv_shapes(x, kernel, bias)
    k = kernel.shape[0]
    pad = k // 2
    n, h, w, _ = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))

    out = np.empty((n, h, w, kernel.shape[3]), dtype=np.float64)
    out[...] = bias
    for di in range(k):
        for dj in range(k):
            out += xp[:, di:di + h, dj:dj + w, :] @ kernel[di, dj]
    return out


def conv2d_backward(
    x: np.ndarray,
    kernel: np.ndarray,
    grad_out: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of conv2d.

    Returns:
        (grad_x, grad_kernel, grad_bias).
    """
    k = kernel.shape[0]
    pad = k // 2
    n, h, w, _ = x.shape
    if grad_out.shape != (n, h, w, kernel.shape[3]):
        raise ShapeMismatch(f"upstream gradient {grad_out.shape} does not match conv output")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))

    grad_xp = np.zeros_like(xp)
    grad_kernel = np.empty_like(kernel)
    for di in range(k):
        for dj in range(k):
            window = xp[:, di:di + h, dj:dj + w, :]
            grad_kernel[di, dj] = np.tensordot(window, grad_out, axes=([0, 1, 2], [0, 1, 2]))
            grad_xp[:, di:di + h, dj:dj + w, :] += grad_out @ kernel[di, dj].T
    grad_bias = grad_out.sum(axis=(0, 1, 2))
    return grad_xp[:, pad:pad + h, pad:pad + w, :], grad_kernel, grad_bias


def _dilate(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    z = np.zeros((n, 2 * h, 2 * w, c), dtype=np.float64)
    z[:, ::2, ::2, :] = x
    return z


def upconv2(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    3x3 transpose convolution, stride 2, output exactly twice the input extent.

    Input pixel i feeds outputs 2i + k - 1 through kernel tap k (k = 0, 1, 2);
    positions outside [0, 2H) are dropped. Computed as a same-padded
    correlation of the zero-dilated input with the spatially flipped kernel.

    Args:
        x: [N, H, W, Cin].
        kernel: [3, 3, Cin, Cout].
        bias: [Cout].

    Returns:
        [N, 2H, 2W, Cout].
    """
    if kernel.ndim != 4 or kernel.shape[:2] != (3, 3):
        raise ShapeMismatch(f"transpose-conv kernel must be 3 x 3 x Cin x Cout, got {kernel.shape}")
    if x.ndim != 4:
        raise ShapeMismatch(f"transpose-conv input must be N x H x W x C, got {x.shape}")
    return conv2d(_dilate(x), kernel[::-1, ::-1], bias)


def upconv2_backward(
    x: np.ndarray,
    kernel: np.ndarray,
    grad_out: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of upconv2: (grad_x, grad_kernel, grad_bias)."""
    grad_z, grad_flipped, grad_bias = conv2d_backward(_dilate(x), kernel[::-1, ::-1], grad_out)
    return grad_z[:, ::2, ::2, :], grad_flipped[::-1, ::-1].copy(), grad_bias


# ==================== Activations ====================

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """
    1 / (1 + e^-x), evaluated without overflow for large |x| and clamped to
    [SIGMOID_EPS, 1 - SIGMOID_EPS] so the output never reaches 0 or 1.
    """
    out = np.empty_like(x, dtype=np.float64)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return np.clip(out, SIGMOID_EPS, 1.0 - SIGMOID_EPS)


def sigmoid_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient through sigmoid given its forward output; zero where the output was clamped."""
    inside = (out > SIGMOID_EPS) & (out < 1.0 - SIGMOID_EPS)
    return grad_out * out * (1.0 - out) * inside


# ==================== Pooling ====================

def maxpool2(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    2x2 max-pooling with stride 2.

    Returns:
        (pooled [N, H/2, W/2, C], argmax [N, H/2, W/2, C]) where argmax is the
        row-major position 0..3 of the winner inside its window (first max on ties).
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"maxpool input must be N x H x W x C, got {x.shape}")
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise OddExtent(f"maxpool2 needs even height and width, got {h} x {w}")
    windows = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    argmax = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return pooled, argmax


def maxpool2_backward(argmax: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Route each upstream gradient to the recorded argmax of its window."""
    n, h2, w2, c = argmax.shape
    if grad_out.shape != argmax.shape:
        raise ShapeMismatch(f"upstream gradient {grad_out.shape} does not match pooled {argmax.shape}")
    windows = np.zeros((n, h2, w2, c, 4), dtype=np.float64)
    np.put_along_axis(windows, argmax[..., None], grad_out[..., None], axis=-1)
    return windows.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * h2, 2 * w2, c)


# ==================== Structure ====================

def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack two feature maps along the channel axis."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeMismatch(f"cannot concatenate {a.shape} and {b.shape} along channels")
    return np.concatenate([a, b], axis=-1)


def concat_channels_backward(a_channels: int, grad_out: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Split the gradient of a concatenation back into its two inputs."""
    return grad_out[..., :a_channels], grad_out[..., a_channels:]


def dropout(
    x: np.ndarray,
    rate: float,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Inverted dropout.

    Returns:
        (output, scale mask) where the mask is None when nothing is dropped
        (no rng, i.e. eval mode, or rate 0).
    """
    if rng is None or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: Optional[np.ndarray], grad_out: np.ndarray) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask
