"""
Segmentation losses with analytic gradients with respect to the prediction.

Every loss takes (y, y_hat) of equal shape and returns (loss, dL/dy_hat).
Arrays with ndim >= 3 carry the batch on axis 0; smaller arrays are a
single item. Pixel-wise losses use mean reduction over every element;
Dice is computed per item and averaged over the batch.
"""

from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from expomask.errors import NonBinaryGroundTruth, ShapeMismatch
from expomask.models.training import LossName

# Predictions are clamped to [EPS, 1 - EPS] before any log
EPS = 1e-7

LossResult = Tuple[float, np.ndarray]


class FocalParams(BaseModel):
    """Focal loss hyper-parameters."""
    alpha: float = Field(0.25, gt=0, lt=1, description="Weight of the positive class")
    gamma: float = Field(2.0, ge=0, description="Focusing exponent")


def _prepare(y: np.ndarray, y_hat: np.ndarray, binary: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeMismatch(f"Ground truth {y.shape} and prediction {y_hat.shape} differ")
    if binary and not np.all((y == 0) | (y == 1)):
        raise NonBinaryGroundTruth("Ground truth must only contain 0 and 1")
    return y, y_hat


def _clamp(y_hat: np.ndarray) -> np.ndarray:
    return np.clip(y_hat, EPS, 1.0 - EPS)


def bce(y: np.ndarray, y_hat: np.ndarray) -> LossResult:
    """
    Binary cross-entropy, mean over pixels.

    Returns:
        (loss, grad) with grad = (p - y) / (p (1 - p)) / n on the clamped p.
    """
    y, y_hat = _prepare(y, y_hat)
    p = _clamp(y_hat)
    n = y.size
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / n
    grad = (p - y) / (p * (1.0 - p)) / n
    return float(loss), grad


def bce_sum(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Binary cross-entropy summed over all pixels (no mean)."""
    y, y_hat = _prepare(y, y_hat)
    p = _clamp(y_hat)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def focal(y: np.ndarray, y_hat: np.ndarray, params: Optional[FocalParams] = None) -> LossResult:
    """
    Focal loss, mean over pixels.

    -[alpha y (1-p)^gamma ln p + (1-alpha) (1-y) p^gamma ln(1-p)]
    """
    params = params or FocalParams()
    alpha, gamma = params.alpha, params.gamma
    y, y_hat = _prepare(y, y_hat)
    p = _clamp(y_hat)
    n = y.size

    log_p = np.log(p)
    log_q = np.log(1.0 - p)
    pos_weight = np.power(1.0 - p, gamma)
    neg_weight = np.power(p, gamma)

    loss = -np.sum(alpha * y * pos_weight * log_p + (1.0 - alpha) * (1.0 - y) * neg_weight * log_q) / n

    # d/dp of each term; gamma = 0 makes the first factor of each vanish
    d_pos = -gamma * np.power(1.0 - p, gamma - 1.0) * log_p + pos_weight / p
    d_neg = gamma * np.power(p, gamma - 1.0) * log_q - neg_weight / (1.0 - p)
    grad = -(alpha * y * d_pos + (1.0 - alpha) * (1.0 - y) * d_neg) / n
    return float(loss), grad


def _batch_view(a: np.ndarray) -> np.ndarray:
    if a.ndim >= 3:
        return a.reshape(a.shape[0], -1)
    return a.reshape(1, -1)


def dice_loss(y: np.ndarray, y_hat: np.ndarray) -> LossResult:
    """
    Smoothed Dice loss: 1 - (2 S_yp + 1) / (S_y + S_p + 1), averaged per item.

    The +1 keeps y = y_hat = 0 well defined (loss 0). Ground truth may be soft.
    """
    y, y_hat = _prepare(y, y_hat, binary=False)
    yb = _batch_view(y)
    pb = _batch_view(y_hat)
    items = yb.shape[0]

    s_y = yb.sum(axis=1)
    s_p = pb.sum(axis=1)
    s_yp = (yb * pb).sum(axis=1)
    numerator = 2.0 * s_yp + 1.0
    denominator = s_y + s_p + 1.0

    loss = float(np.mean(1.0 - numerator / denominator))
    grad = -(2.0 * yb * denominator[:, None] - numerator[:, None]) / (denominator[:, None] ** 2)
    grad = (grad / items).reshape(y.shape)
    return loss, grad


def dice_bce(y: np.ndarray, y_hat: np.ndarray) -> LossResult:
    """Dice loss plus binary cross-entropy; gradients add."""
    y, y_hat = _prepare(y, y_hat)
    dice_value, dice_grad = dice_loss(y, y_hat)
    bce_value, bce_grad = bce(y, y_hat)
    return dice_value + bce_value, dice_grad + bce_grad


LOSSES: Dict[LossName, Callable[[np.ndarray, np.ndarray], LossResult]] = {
    LossName.BCE: bce,
    LossName.FOCAL: focal,
    LossName.DICE_BCE: dice_bce,
    LossName.DICE: dice_loss,
}


def get_loss(name: str) -> Callable[[np.ndarray, np.ndarray], LossResult]:
    """Look up a loss by selector string: bce, focal, dice_bce or dice."""
    return LOSSES[LossName(name)]
