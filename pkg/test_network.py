"""
Tests for the layer kernels, the U-Net, Adam, the model file and the gradient-check suite.

Usage:
    pytest test_network.py
"""

import numpy as np
import pytest

from expomask.errors import IndivisibleExtent, ModelFormatError, OddExtent, ShapeMismatch
from expomask.network import layers
from expomask.network.checkpoint import MAGIC, load_model, save_model
from expomask.network.gradcheck import check_layers, check_losses, check_unet
from expomask.network.optimizer import AdamState, adam_step, init_adam
from expomask.network.unet import (
    DEFAULT_WIDTHS,
    NetMode,
    init_params,
    param_shapes,
    predict,
    unet_backward,
    unet_forward,
    unet_widths,
)
from expomask.tools.losses import bce


# ==================== Layers ====================

def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(1, 5, 4, 1))
    kernel = np.zeros((3, 3, 1, 1))
    kernel[1, 1, 0, 0] = 1.0
    assert np.array_equal(layers.conv2d(x, kernel, np.zeros(1)), x)


def test_conv_zero_kernel_gives_bias():
    x = np.ones((2, 4, 4, 3))
    out = layers.conv2d(x, np.zeros((3, 3, 3, 2)), np.array([0.5, -2.0]))
    assert np.all(out[..., 0] == 0.5)
    assert np.all(out[..., 1] == -2.0)


def test_conv_all_ones_zero_padding():
    out = layers.conv2d(np.ones((1, 3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))[0, :, :, 0]
    assert out.tolist() == [[4, 6, 4], [6, 9, 6], [4, 6, 4]]


def test_conv_is_linear():
    rng = np.random.default_rng(1)
    x, z = rng.normal(size=(2, 2, 6, 6, 3))
    kernel = rng.normal(size=(3, 3, 3, 4))
    bias = np.zeros(4)
    lhs = layers.conv2d(2.5 * x - 0.5 * z, kernel, bias)
    rhs = 2.5 * layers.conv2d(x, kernel, bias) - 0.5 * layers.conv2d(z, kernel, bias)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_conv_shape_errors():
    with pytest.raises(ShapeMismatch):
        layers.conv2d(np.ones((1, 4, 4, 2)), np.ones((3, 3, 3, 1)), np.zeros(1))
    with pytest.raises(ShapeMismatch):
        layers.conv2d(np.ones((1, 4, 4, 1)), np.ones((3, 3, 1, 1)), np.zeros(2))


def test_relu_and_sigmoid():
    assert layers.relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]
    assert layers.sigmoid(np.array([0.0]))[0] == 0.5
    extreme = layers.sigmoid(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(extreme))
    assert np.all((extreme > 0) & (extreme < 1))
    assert np.all(layers.sigmoid_backward(extreme, np.ones(2)) == 0.0)


def test_unet_output_stays_inside_unit_interval():
    params = init_params(seed=0, channel_scale=8)
    for value in (1e4, -1e4):
        out = unet_forward(params, np.full((1, 16, 16, 3), value))
        assert np.all((out > 0) & (out < 1))


def test_maxpool_records_argmax():
    pooled, argmax = layers.maxpool2(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1))
    assert pooled.ravel().tolist() == [4.0]
    assert divmod(int(argmax.ravel()[0]), 2) == (1, 1)


def test_maxpool_odd_extent():
    with pytest.raises(OddExtent):
        layers.maxpool2(np.ones((1, 3, 4, 1)))


def test_maxpool_backward_routes_to_one_position():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 6, 8, 3))
    g = rng.normal(size=(2, 3, 4, 3))
    _, argmax = layers.maxpool2(x)
    dx = layers.maxpool2_backward(argmax, g)
    assert np.count_nonzero(dx) == g.size
    assert np.isclose(np.abs(dx).sum(), np.abs(g).sum())


def test_upconv_doubles_extent():
    out = layers.upconv2(np.ones((2, 3, 5, 4)), np.ones((3, 3, 4, 6)), np.zeros(6))
    assert out.shape == (2, 6, 10, 6)


def test_upconv_tap_placement():
    # a single input pixel i feeds outputs 2i-1, 2i, 2i+1 through taps 0, 1, 2
    x = np.zeros((1, 3, 3, 1))
    x[0, 1, 1, 0] = 1.0
    kernel = np.arange(9, dtype=np.float64).reshape(3, 3, 1, 1)
    out = layers.upconv2(x, kernel, np.zeros(1))[0, :, :, 0]
    assert np.array_equal(out[1:4, 1:4], kernel[:, :, 0, 0])
    assert out.sum() == kernel.sum()


def test_dropout_eval_is_identity():
    x = np.ones((1, 4, 4, 2))
    out, mask = layers.dropout(x, 0.5, None)
    assert out is x
    assert mask is None


# ==================== U-Net ====================

def test_default_widths():
    assert unet_widths(1) == DEFAULT_WIDTHS == (16, 32, 64, 128, 256)
    assert unet_widths(8) == (2, 4, 8, 16, 32)
    shapes = param_shapes(DEFAULT_WIDTHS, 3)
    assert shapes["enc1.conv1.kernel"] == (3, 3, 3, 16)
    assert shapes["enc5.conv2.kernel"] == (3, 3, 256, 256)
    assert shapes["dec1.up.kernel"] == (3, 3, 256, 128)
    assert shapes["dec1.conv1.kernel"] == (3, 3, 256, 128)
    assert shapes["dec4.conv2.kernel"] == (3, 3, 16, 16)
    assert shapes["head.kernel"] == (1, 1, 16, 1)


def test_init_is_deterministic_with_zero_biases():
    a = init_params(seed=42, channel_scale=8)
    b = init_params(seed=42, channel_scale=8)
    for name in a.names():
        assert np.array_equal(a[name], b[name])
        if name.endswith(".bias"):
            assert not a[name].any()


def test_init_std_matches_he():
    params = init_params(seed=3)
    kernel = params["enc4.conv1.kernel"]
    assert kernel.shape == (3, 3, 64, 128)
    assert abs(kernel.std() - np.sqrt(2.0 / 576)) < 0.1 * np.sqrt(2.0 / 576)


def test_forward_shape_and_range():
    params = init_params(seed=0, channel_scale=8)
    x = np.random.default_rng(0).uniform(size=(1, 64, 64, 3))
    out = unet_forward(params, x)
    assert out.shape == (1, 64, 64, 1)
    assert np.all((out > 0) & (out < 1))


def test_forward_full_resolution_batch():
    params = init_params(seed=0, channel_scale=8)
    out = unet_forward(params, np.zeros((2, 512, 512, 3)), NetMode.eval())
    assert out.shape == (2, 512, 512, 1)


def test_forward_rejects_indivisible_extent():
    params = init_params(seed=0, channel_scale=8)
    with pytest.raises(IndivisibleExtent):
        unet_forward(params, np.zeros((1, 50, 50, 3)))


def test_forward_rejects_wrong_channels():
    params = init_params(seed=0, channel_scale=8)
    with pytest.raises(ShapeMismatch):
        unet_forward(params, np.zeros((1, 16, 16, 1)))


def test_eval_is_deterministic_and_train_depends_on_seed():
    params = init_params(seed=1, channel_scale=8)
    x = np.random.default_rng(1).uniform(size=(2, 16, 16, 3))
    assert np.array_equal(unet_forward(params, x), unet_forward(params, x))
    a = unet_forward(params, x, NetMode.train(0.2, seed=5))
    b = unet_forward(params, x, NetMode.train(0.2, seed=5))
    c = unet_forward(params, x, NetMode.train(0.2, seed=6))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_zero_upstream_gives_zero_gradients():
    params = init_params(seed=2, channel_scale=8)
    x = np.random.default_rng(2).uniform(size=(1, 16, 16, 3))
    grads = unet_backward(params, x, NetMode.train(0.2, seed=1), np.zeros((1, 16, 16, 1)))
    assert all(not grads[name].any() for name in grads.names())


def test_backward_checks_upstream_shape():
    params = init_params(seed=2, channel_scale=8)
    with pytest.raises(ShapeMismatch):
        unet_backward(params, np.zeros((1, 16, 16, 3)), None, np.zeros((1, 16, 16, 2)))


def test_head_bias_gradient_under_bce():
    params = init_params(seed=4, channel_scale=8)
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(2, 16, 16, 3))
    y = rng.integers(0, 2, size=(2, 16, 16, 1)).astype(np.float64)
    y_hat = unet_forward(params, x)
    _, grad = bce(y, y_hat)
    grads = unet_backward(params, x, NetMode.eval(), grad)
    # mean-reduced BCE through the sigmoid leaves (y_hat - y) / n per pixel
    expected = np.sum(y_hat - y) / y.size
    assert grads["head.bias"][0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_predict_matches_forward():
    params = init_params(seed=6, channel_scale=8)
    x = np.random.default_rng(6).uniform(size=(5, 16, 16, 3))
    assert np.allclose(predict(params, x, batch_size=2), unet_forward(params, x), rtol=0, atol=1e-12)


# ==================== Adam ====================

def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.zeros(2)}, init_adam(params))
    assert np.array_equal(new["w"], params["w"])
    assert state.t == 1


def test_adam_first_step_value():
    params = {"w": np.array([0.0])}
    new, state = adam_step(params, {"w": np.array([1.0])}, AdamState())
    # m_hat = v_hat = 1 after bias correction
    assert new["w"][0] == -0.001 / (1.0 + 1e-8)
    assert state.t == 1
    assert state.m["w"][0] == pytest.approx(0.1)
    assert state.v["w"][0] == pytest.approx(0.001)


def test_adam_is_pure_and_deterministic():
    params = init_params(seed=9, channel_scale=16)
    grads = params.with_tensors({n: np.ones_like(t) for n, t in params.tensors.items()})
    state = init_adam(params)
    before = params.copy()
    a, state_a = adam_step(params, grads, state)
    b, state_b = adam_step(params, grads, state)
    assert state.t == 0
    for name in params.names():
        assert np.array_equal(params[name], before[name])
        assert np.array_equal(a[name], b[name])
    assert state_a.t == state_b.t == 1


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())


# ==================== Model file ====================

def test_model_file_round_trip(tmp_path):
    params = init_params(seed=11, channel_scale=8, input_channels=1)
    meta = {"config": {"loss": "focal"}}
    save_model(tmp_path / "m.bin", params, meta)
    loaded, loaded_meta = load_model(tmp_path / "m.bin", widths=(2, 4, 8, 16, 32), input_channels=1)
    assert loaded_meta == meta
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(loaded[name], params[name])


def test_model_bytes_are_reproducible(tmp_path):
    save_model(tmp_path / "a.bin", init_params(seed=12, channel_scale=8), {"k": 1})
    save_model(tmp_path / "b.bin", init_params(seed=12, channel_scale=8), {"k": 1})
    data = (tmp_path / "a.bin").read_bytes()
    assert data.startswith(MAGIC)
    assert data == (tmp_path / "b.bin").read_bytes()


def test_model_architecture_mismatch(tmp_path):
    save_model(tmp_path / "m.bin", init_params(seed=0, channel_scale=8))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.bin", widths=DEFAULT_WIDTHS)
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "m.bin", input_channels=1)


def test_model_bad_magic(tmp_path):
    (tmp_path / "junk.bin").write_bytes(b"NOTAMODEL" + bytes(64))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "junk.bin")


# ==================== Gradient checks ====================

def test_layer_gradients():
    for result in check_layers(seed=0):
        assert result.passed, result


def test_loss_gradients():
    for result in check_losses(seed=0):
        assert result.passed, result


def test_unet_gradients():
    result = check_unet(channel_scale=8, samples=120, seed=0)
    assert result.checked >= 100
    assert result.passed, result
