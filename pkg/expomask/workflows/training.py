"""
Training Workflow
Builds training pairs from a dataset, trains the U-Net with Adam and scores it.
"""

import logging
import time
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from expomask.errors import EmptyDataset, NonFiniteLoss
from expomask.models.image import BinaryMask, ExposureClass, ImageU8
from expomask.models.report import ConfusionCounts, MetricRow
from expomask.models.training import TrainConfig, TrainReport
from expomask.network.checkpoint import load_model, save_model
from expomask.network.optimizer import adam_step, init_adam
from expomask.network.unet import NetMode, UNetParams, init_params, predict, unet_backward, unet_forward
from expomask.tools.color import luminance
from expomask.tools.ground_truth import generate_mask
from expomask.tools.image_io import load_mask, load_png, resize_image, resize_mask, scan_dataset
from expomask.tools.losses import get_loss
from expomask.tools.metrics import binarize, confusion, metric_row, metric_row_per_image, pool_counts, roc_auc

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.2


class TrainingSample(BaseModel):
    """One network input with its ground truth."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scene_id: str
    x: np.ndarray  # H x W x C float64 in [0, 1]
    gt: BinaryMask


# ==================== Dataset ====================

def _network_input(image: ImageU8, cfg: TrainConfig) -> np.ndarray:
    if cfg.input_channels == 1:
        plane = luminance(image).y[:, :, np.newaxis]
    else:
        plane = image.data
    return plane.astype(np.float64) / 255.0


def prepare_image(image: ImageU8, cfg: TrainConfig) -> np.ndarray:
    """Resize an image to the configured input size and normalize it for the network."""
    size = (cfg.input_size, cfg.input_size)
    if cfg.input_channels == 3 and image.channels == 1:
        image = ImageU8(data=np.repeat(image.data, 3, axis=2))
    return _network_input(resize_image(image, size), cfg)


def regenerate_gt(image: ImageU8, cfg: TrainConfig) -> BinaryMask:
    """
    Ground truth for an image without a stored mask: the luminance plane is
    resized bilinearly to the input size, then thresholded with cfg.gt_method.
    """
    size = (cfg.input_size, cfg.input_size)
    plane = luminance(image)
    resized = resize_image(ImageU8(data=plane.y[:, :, np.newaxis]), size)
    return generate_mask(luminance(resized), cfg.exposure_class, cfg.gt_method, cfg.ranges)


def build_training_set(root: Path, cfg: TrainConfig) -> List[TrainingSample]:
    """
    Pair every scene's cfg.exposure_class image with its ground truth.

    A stored gt_low.png / gt_high.png is loaded and resized nearest-neighbour;
    otherwise the mask is regenerated from the resized luminance.

    Args:
        root: Dataset root.
        cfg: Training configuration.

    Returns:
        Samples in lexicographic scene order.
    """
    scan = scan_dataset(root)
    if not scan.entries:
        raise EmptyDataset(f"No complete scenes under {root}")

    size = (cfg.input_size, cfg.input_size)
    samples = []
    for entry in scan.entries:
        image = load_png(entry.image_path(cfg.exposure_class))
        gt_path = entry.gt_path(cfg.exposure_class)
        if gt_path is not None:
            gt = resize_mask(load_mask(gt_path), size)
        else:
            gt = regenerate_gt(image, cfg)
        samples.append(TrainingSample(scene_id=entry.scene_id, x=prepare_image(image, cfg), gt=gt))
    logger.info("Built %d %s-exposure samples from %s", len(samples), cfg.exposure_class.value, root)
    return samples


def split_dataset(
    samples: List[TrainingSample],
    fraction: float = VALIDATION_FRACTION,
) -> Tuple[List[TrainingSample], List[TrainingSample]]:
    """The last floor(fraction * n) samples form the validation split."""
    held_out = int(len(samples) * fraction)
    cut = len(samples) - held_out
    return samples[:cut], samples[cut:]


def _stack(samples: List[TrainingSample]) -> Tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.x for s in samples], axis=0)
    y = np.stack([s.gt.m for s in samples], axis=0).astype(np.float64)[..., np.newaxis]
    return x, y


# ==================== Training ====================

def train(
    data: List[TrainingSample],
    cfg: TrainConfig,
    validation: Optional[List[TrainingSample]] = None,
) -> Tuple[UNetParams, TrainReport]:
    """
    Train a fresh U-Net on data.

    Each epoch visits a seeded permutation of the samples in minibatches:
    train-mode forward, loss, backward, Adam step. Every minibatch draws its
    own dropout seed from the run's generator, so a seed fixes the run.

    Args:
        data: Training samples.
        cfg: Training configuration.
        validation: Held-out samples to score after training. An empty list
            scores the training samples instead; None skips scoring.

    Returns:
        (trained params, TrainReport).
    """
    if not data:
        raise EmptyDataset("No training samples")

    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    loss_fn = get_loss(cfg.loss)
    params = init_params(seed=cfg.seed, channel_scale=cfg.channel_scale, input_channels=cfg.input_channels)
    state = init_adam(params, lr=cfg.lr)
    x_all, y_all = _stack(data)

    epoch_losses: List[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            x, y = x_all[idx], y_all[idx]
            mode = NetMode.train(cfg.dropout_rate, seed=int(rng.integers(0, 2**63)))

            y_hat, cache = unet_forward(params, x, mode, return_cache=True)
            loss, grad = loss_fn(y, y_hat)
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, batch, loss)
            grads = unet_backward(params, x, mode, grad, cache=cache)
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)

        epoch_losses.append(total / len(data))
        logger.info("Epoch %d/%d: loss %.6f", epoch + 1, cfg.epochs, epoch_losses[-1])

    report = TrainReport(epoch_losses=epoch_losses, train_samples=len(data), config=cfg)
    if validation is not None:
        scored = validation or data
        report.evaluated_split = "validation" if validation else "train"
        report.metrics = evaluate(params, scored, cfg)
        report.roc_auc = pooled_roc_auc(params, scored, cfg)
    report.seconds = time.perf_counter() - started
    logger.info("Training finished in %.1fs over %d samples", report.seconds, len(data))
    return params, report


# ==================== Evaluation ====================

def _predict_masks(params: UNetParams, data: List[TrainingSample], cfg: TrainConfig) -> np.ndarray:
    x, _ = _stack(data)
    return predict(params, x, cfg.batch_size)[..., 0]


def image_counts(params: UNetParams, data: List[TrainingSample], cfg: TrainConfig) -> List[ConfusionCounts]:
    """Confusion counts of the binarized eval-mode prediction, one per sample."""
    if not data:
        raise EmptyDataset("No samples to evaluate")
    predictions = _predict_masks(params, data, cfg)
    return [confusion(binarize(p), sample.gt) for p, sample in zip(predictions, data)]


def evaluate(
    params: UNetParams,
    data: List[TrainingSample],
    cfg: TrainConfig,
    per_image: bool = False,
) -> MetricRow:
    """
    Score params on data at threshold 0.5.

    By default confusion counts are pooled over every pixel of every image
    before the metrics are computed; per_image averages per-image metrics.
    """
    counts = image_counts(params, data, cfg)
    if per_image:
        return metric_row_per_image(cfg.loss.value, counts)
    return metric_row(cfg.loss.value, pool_counts(counts))


def pooled_roc_auc(params: UNetParams, data: List[TrainingSample], cfg: TrainConfig) -> float:
    """ROC area of the soft predictions over all pixels of data."""
    predictions = _predict_masks(params, data, cfg)
    gt = BinaryMask(m=np.concatenate([s.gt.m for s in data], axis=0))
    return roc_auc(np.concatenate(list(predictions), axis=0), gt)


# ==================== Workflow ====================

class TrainingWorkflow:
    """
    Workflow behind `expomask train` and `expomask eval`.

    Steps:
    1. Build samples for the configured exposure class
    2. Split off the last 20 % of scenes for validation
    3. Train and score on the held-out split
    4. Save the model with its configuration as metadata
    """

    def run(self, root: Path, cfg: TrainConfig, model_out: Optional[Path] = None) -> Tuple[UNetParams, TrainReport]:
        samples = build_training_set(root, cfg)
        train_set, validation = split_dataset(samples)
        logger.info("Split: %d train, %d validation", len(train_set), len(validation))

        params, report = train(train_set, cfg, validation=validation)
        if model_out is not None:
            save_model(model_out, params, meta={"config": cfg.model_dump(mode="json")})
        return params, report

    def score(self, root: Path, model_path: Path, per_image: bool = False) -> MetricRow:
        """Evaluate a saved model on every scene under root."""
        params, meta = load_model(model_path)
        cfg = config_from_meta(meta, params)
        samples = build_training_set(root, cfg)
        return evaluate(params, samples, cfg, per_image=per_image)


def config_from_meta(meta: dict, params: UNetParams) -> TrainConfig:
    """TrainConfig stored in a model's metadata, or one inferred from its architecture."""
    if "config" in meta:
        return TrainConfig.model_validate(meta["config"])
    logger.warning("Model has no stored config; assuming low exposure, manual GT")
    return TrainConfig(
        exposure_class=ExposureClass.LOW,
        channel_scale=16 // params.widths[0],
        input_channels=params.input_channels,
    )


# Create workflow instance
training_workflow = TrainingWorkflow()


def run_training(root: Path, cfg: TrainConfig, model_out: Optional[Path] = None) -> Tuple[UNetParams, TrainReport]:
    """
    Train one network for cfg.exposure_class on the dataset at root.

    Args:
        root: Dataset root.
        cfg: Training configuration.
        model_out: Where to save the model; not saved when None.

    Returns:
        (params, TrainReport).
    """
    return training_workflow.run(root, cfg, model_out)


def run_evaluation(root: Path, model_path: Path, per_image: bool = False) -> MetricRow:
    """Score a saved model against the dataset at root."""
    return training_workflow.score(root, model_path, per_image)
