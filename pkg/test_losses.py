"""
Tests for the segmentation losses and their gradients.

Usage:
    pytest test_losses.py
"""

import math

import numpy as np
import pytest

from expomask.errors import NonBinaryGroundTruth, ShapeMismatch
from expomask.models.training import LossName
from expomask.tools.losses import EPS, FocalParams, bce, bce_sum, dice_bce, dice_loss, focal, get_loss

LN2 = math.log(2.0)


def random_pair(seed: int, shape=(3, 8, 8, 1)):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=shape).astype(np.float64)
    y_hat = rng.uniform(0.01, 0.99, size=shape)
    return y, y_hat


# ==================== Hand values ====================

def test_bce_half_is_ln2():
    assert abs(bce(np.array([1.0]), np.array([0.5]))[0] - LN2) < 1e-12
    assert abs(bce(np.array([0.0]), np.array([0.5]))[0] - LN2) < 1e-12


def test_bce_perfect_prediction_is_tiny():
    loss, _ = bce(np.array([1.0]), np.array([1.0 - EPS]))
    assert 0 < loss < 2e-7


def test_bce_clamps_exact_zero_and_one():
    loss, grad = bce(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert np.isfinite(loss)
    assert np.all(np.isfinite(grad))


def test_focal_defaults():
    params = FocalParams()
    assert (params.alpha, params.gamma) == (0.25, 2.0)
    assert abs(focal(np.array([1.0]), np.array([0.5]))[0] - 0.25 * 0.25 * LN2) < 1e-12


def test_focal_without_focusing_is_half_bce():
    y, y_hat = random_pair(1)
    f_loss, f_grad = focal(y, y_hat, FocalParams(alpha=0.5, gamma=0.0))
    b_loss, b_grad = bce(y, y_hat)
    assert f_loss == pytest.approx(0.5 * b_loss, rel=1e-12)
    assert np.allclose(f_grad, 0.5 * b_grad, rtol=1e-12, atol=0)


def test_focal_easy_example_vanishes():
    loss, _ = focal(np.array([1.0]), np.array([0.999]))
    assert loss < 1e-7


def test_dice_empty_is_zero():
    loss, grad = dice_loss(np.zeros(6), np.zeros(6))
    assert loss == 0.0
    assert np.all(np.isfinite(grad))


def test_dice_perfect_overlap_is_zero():
    y = np.array([1.0, 0.0, 1.0, 1.0])
    assert dice_loss(y, y.copy())[0] == pytest.approx(0.0, abs=1e-15)


def test_dice_all_missed():
    assert dice_loss(np.ones(4), np.zeros(4))[0] == pytest.approx(0.8, abs=1e-15)


def test_dice_bce_hand_value():
    loss, _ = dice_bce(np.ones(4), np.full(4, 0.5))
    assert loss == pytest.approx(1 - 5 / 7 + LN2, abs=1e-12)
    assert loss == pytest.approx(0.978861, abs=1e-6)


def test_dice_bce_is_additive():
    y, y_hat = random_pair(2)
    total, total_grad = dice_bce(y, y_hat)
    d, d_grad = dice_loss(y, y_hat)
    b, b_grad = bce(y, y_hat)
    assert abs(total - (d + b)) < 1e-12
    assert np.allclose(total_grad, d_grad + b_grad, rtol=0, atol=1e-15)


def test_bce_sum_is_unreduced():
    y, y_hat = random_pair(3)
    assert bce_sum(y, y_hat) == pytest.approx(bce(y, y_hat)[0] * y.size, rel=1e-12)


# ==================== Properties ====================

def test_losses_are_non_negative():
    for seed in range(20):
        y, y_hat = random_pair(seed)
        for name in ("bce", "focal", "dice_bce", "dice"):
            assert get_loss(name)(y, y_hat)[0] >= 0


def test_dice_is_permutation_invariant():
    y, y_hat = random_pair(4, shape=(64,))
    order = np.random.default_rng(4).permutation(64)
    assert dice_loss(y[order], y_hat[order])[0] == pytest.approx(dice_loss(y, y_hat)[0], rel=1e-12)


def test_dice_averages_over_batch_items():
    y, y_hat = random_pair(5, shape=(2, 4, 4, 1))
    batch = dice_loss(y, y_hat)[0]
    items = [dice_loss(y[i], y_hat[i])[0] for i in range(2)]
    assert batch == pytest.approx(sum(items) / 2, rel=1e-12)


def test_moving_toward_target_never_hurts():
    rng = np.random.default_rng(6)
    y, y_hat = random_pair(6, shape=(32,))
    for loss in (bce, focal):
        base = loss(y, y_hat)[0]
        for i in range(32):
            closer = y_hat.copy()
            closer[i] = y_hat[i] + rng.uniform(0.1, 0.9) * (y[i] - y_hat[i])
            assert loss(y, closer)[0] <= base


def test_gradient_matches_finite_difference():
    y, y_hat = random_pair(7, shape=(2, 3, 3, 1))
    h = 1e-6
    for name in LossName:
        loss = get_loss(name.value)
        _, grad = loss(y, y_hat)
        for index in np.ndindex(y.shape):
            plus = y_hat.copy()
            minus = y_hat.copy()
            plus[index] += h
            minus[index] -= h
            numeric = (loss(y, plus)[0] - loss(y, minus)[0]) / (2 * h)
            assert abs(numeric - grad[index]) <= 1e-6 * max(abs(numeric), abs(grad[index]), 1e-6)


# ==================== Errors ====================

def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        bce(np.zeros(4), np.zeros(5))


def test_non_binary_ground_truth():
    with pytest.raises(NonBinaryGroundTruth):
        focal(np.array([0.5]), np.array([0.5]))


def test_unknown_loss_name():
    with pytest.raises(ValueError):
        get_loss("tversky")
