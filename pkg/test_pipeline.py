"""
Tests for dataset building, training, evaluation and the coverage comparison.

Usage:
    pytest test_pipeline.py
"""

import numpy as np
import pytest

from expomask.errors import EmptyDataset, NonFiniteLoss
from expomask.models.image import BinaryMask, ExposureClass, SynthSceneParams
from expomask.models.training import GtMethod, TrainConfig
from expomask.network.checkpoint import load_model
from expomask.network.unet import init_params, predict
from expomask.tools.color import luminance
from expomask.tools.ground_truth import generate_mask, mask_coverage, merge_masks, residual_mask
from expomask.tools.image_io import load_mask, load_png, save_mask, scan_dataset, write_synthetic_dataset
from expomask.tools.metrics import binarize, confusion, metric_row, pool_counts
from expomask.workflows.coverage import compare_gt_methods, write_coverage_csv
from expomask.workflows.masks import write_gt_masks
from expomask.workflows.training import (
    build_training_set,
    config_from_meta,
    evaluate,
    image_counts,
    regenerate_gt,
    run_evaluation,
    run_training,
    split_dataset,
    train,
)


def toy_config(**overrides) -> TrainConfig:
    values = dict(input_size=32, channel_scale=8, epochs=2, batch_size=2, seed=3)
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    write_synthetic_dataset(root, 5, SynthSceneParams(size=(48, 40), seed=100))
    return root


def same_params(a, b) -> bool:
    return a.names() == b.names() and all(np.array_equal(a[name], b[name]) for name in a.names())


# ==================== Dataset ====================

def test_training_set_regenerates_gt(dataset):
    cfg = toy_config(gt_method=GtMethod.OTSU)
    samples = build_training_set(dataset, cfg)
    assert [s.scene_id for s in samples] == [f"scene_{i:04d}" for i in range(5)]
    first = samples[0]
    assert first.x.shape == (32, 32, 3)
    assert 0.0 <= first.x.min() and first.x.max() <= 1.0
    expected = regenerate_gt(load_png(dataset / "scene_0000" / "low.png"), cfg)
    assert np.array_equal(first.gt.m, expected.m)


def test_regenerated_gt_thresholds_resized_luminance(dataset):
    cfg = toy_config(input_size=48)
    image = load_png(dataset / "scene_0001" / "low.png")
    plane = luminance(image)
    assert plane.y.shape == (48, 40)
    mask = regenerate_gt(image, cfg)
    assert mask.m.shape == (48, 48)


def test_stored_gt_takes_precedence(dataset):
    save_mask(BinaryMask(m=np.ones((48, 40), dtype=np.uint8)), dataset / "scene_0002" / "gt_high.png")
    samples = build_training_set(dataset, toy_config(exposure_class=ExposureClass.HIGH))
    assert samples[2].gt.m.all()
    assert samples[2].gt.m.shape == (32, 32)


def test_luminance_input(dataset):
    samples = build_training_set(dataset, toy_config(input_channels=1))
    assert samples[0].x.shape == (32, 32, 1)


def test_empty_dataset(tmp_path):
    with pytest.raises(EmptyDataset):
        build_training_set(tmp_path, toy_config())


def test_split_holds_out_last_fifth(dataset):
    samples = build_training_set(dataset, toy_config())
    train_set, validation = split_dataset(samples)
    assert [s.scene_id for s in validation] == ["scene_0004"]
    assert len(train_set) == 4
    assert split_dataset(samples[:4])[1] == []


# ==================== Training ====================

def test_training_is_deterministic(dataset):
    samples = build_training_set(dataset, toy_config())
    params_a, report_a = train(samples, toy_config())
    params_b, report_b = train(samples, toy_config())
    assert same_params(params_a, params_b)
    assert report_a.epoch_losses == report_b.epoch_losses
    assert len(report_a.epoch_losses) == 2


def test_zero_learning_rate_keeps_init(dataset):
    cfg = toy_config(lr=0.0, epochs=3)
    params, _ = train(build_training_set(dataset, cfg), cfg)
    assert same_params(params, init_params(seed=cfg.seed, channel_scale=8, input_channels=3))


def test_empty_validation_scores_training_set(dataset):
    samples = build_training_set(dataset, toy_config())
    _, report = train(samples[:2], toy_config(), validation=[])
    assert report.evaluated_split == "train"
    assert report.metrics is not None
    assert 0.0 <= report.roc_auc <= 1.0


def test_no_validation_skips_scoring(dataset):
    samples = build_training_set(dataset, toy_config())
    _, report = train(samples[:2], toy_config(epochs=1))
    assert report.metrics is None


def test_train_needs_samples():
    with pytest.raises(EmptyDataset):
        train([], toy_config())


def test_nan_input_aborts_training(dataset):
    cfg = toy_config(batch_size=1)
    sample = build_training_set(dataset, cfg)[0]
    x = sample.x.copy()
    x[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLoss) as excinfo:
        train([sample.model_copy(update={"x": x})], cfg)
    assert (excinfo.value.epoch, excinfo.value.batch) == (0, 0)


@pytest.mark.parametrize("loss", ["bce", "focal", "dice_bce"])
def test_overfits_four_scenes(tmp_path, loss):
    write_synthetic_dataset(tmp_path, 4, SynthSceneParams(size=(64, 64), seed=7))
    cfg = TrainConfig(
        loss=loss,
        input_size=64,
        channel_scale=8,
        epochs=200,
        batch_size=1,
        lr=0.001,
        dropout_rate=0.0,
        seed=0,
    )
    samples = build_training_set(tmp_path, cfg)
    params, report = train(samples, cfg, validation=[])
    losses = report.epoch_losses
    assert np.mean(losses[-10:]) < np.mean(losses[:10])
    assert report.metrics.dice >= 0.95


# ==================== Evaluation ====================

def test_pooled_metrics_match_direct_counts(dataset):
    cfg = toy_config()
    samples = build_training_set(dataset, cfg)
    params = init_params(seed=1, channel_scale=8)
    counts = []
    for sample in samples:
        y_hat = predict(params, sample.x[np.newaxis], batch_size=1)
        counts.append(confusion(binarize(y_hat), sample.gt))
    assert image_counts(params, samples, cfg) == counts
    assert evaluate(params, samples, cfg) == metric_row(cfg.loss.value, pool_counts(counts))


def test_evaluation_ignores_sample_order(dataset):
    cfg = toy_config()
    samples = build_training_set(dataset, cfg)
    params = init_params(seed=2, channel_scale=8)
    assert evaluate(params, samples, cfg) == evaluate(params, samples[::-1], cfg)
    assert evaluate(params, samples, cfg, per_image=True) == evaluate(params, samples[::-1], cfg, per_image=True)


def test_run_training_saves_config_and_scores(dataset, tmp_path):
    cfg = toy_config(loss="focal")
    model_path = tmp_path / "low.model"
    _, report = run_training(dataset, cfg, model_path)
    assert report.evaluated_split == "validation"
    assert report.train_samples == 4

    params, meta = load_model(model_path)
    assert config_from_meta(meta, params) == cfg
    row = run_evaluation(dataset, model_path)
    assert row.loss_name == "focal"


def test_model_files_are_reproducible(dataset, tmp_path):
    cfg = toy_config()
    run_training(dataset, cfg, tmp_path / "a.model")
    run_training(dataset, cfg, tmp_path / "b.model")
    assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()


def test_config_inferred_without_metadata():
    params = init_params(seed=0, channel_scale=4, input_channels=1)
    cfg = config_from_meta({}, params)
    assert cfg.channel_scale == 4
    assert cfg.input_channels == 1


# ==================== Ground truth files and coverage ====================

def test_gt_masks_written_per_scene(dataset):
    assert write_gt_masks(dataset, GtMethod.MANUAL, "low") == 5
    entry = scan_dataset(dataset).entries[0]
    expected = generate_mask(luminance(load_png(entry.low)), ExposureClass.LOW, GtMethod.MANUAL)
    assert np.array_equal(load_mask(entry.gt_low).m, expected.m)


def test_mid_gt_is_residual(dataset):
    write_gt_masks(dataset, GtMethod.OTSU, "mid")
    entry = scan_dataset(dataset).entries[1]
    low = generate_mask(luminance(load_png(entry.low)), ExposureClass.LOW, GtMethod.OTSU)
    high = generate_mask(luminance(load_png(entry.high)), ExposureClass.HIGH, GtMethod.OTSU)
    assert np.array_equal(load_mask(entry.gt_mid).m, residual_mask(low, high).m)


def test_gt_rejects_unknown_exposure(dataset):
    with pytest.raises(ValueError):
        write_gt_masks(dataset, GtMethod.MANUAL, "ultra")


def test_coverage_comparison(dataset, tmp_path):
    rows = compare_gt_methods(dataset)
    assert len(rows) == 5 * 2 * 4
    assert [(r.method, r.exposure) for r in rows[:8]] == [
        (m, e) for m in ("manual", "otsu") for e in ("low", "high", "merged", "residual")
    ]

    entry = scan_dataset(dataset).entries[0]
    low = generate_mask(luminance(load_png(entry.low)), ExposureClass.LOW, GtMethod.MANUAL)
    high = generate_mask(luminance(load_png(entry.high)), ExposureClass.HIGH, GtMethod.MANUAL)
    by_exposure = {r.exposure: r.coverage for r in rows[:4]}
    assert by_exposure["low"] == mask_coverage(low)
    assert by_exposure["merged"] == mask_coverage(merge_masks(low, high))
    assert by_exposure["merged"] == pytest.approx(1.0 - by_exposure["residual"])

    out = tmp_path / "coverage.csv"
    write_coverage_csv(rows, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "scene_id,method,exposure,coverage"
    assert lines[1].startswith("scene_0000,manual,low,")
    assert len(lines) == 41
