"""
ExpoMask command line
Synthetic data, ground-truth masks, coverage comparison, training, evaluation and gradient checks.
"""

import functools
import logging
from pathlib import Path
from typing import Optional, Tuple

import click
from pydantic import ValidationError

from expomask import __version__
from expomask.config import load_train_config, settings
from expomask.errors import ExpoMaskError
from expomask.models.image import SynthSceneParams, ThresholdRanges
from expomask.models.training import GtMethod, LossName
from expomask.network.gradcheck import run_gradcheck
from expomask.tools.image_io import write_synthetic_dataset
from expomask.tools.metrics import write_report
from expomask.workflows.coverage import compare_gt_methods, write_coverage_csv
from expomask.workflows.masks import EXPOSURES, write_gt_masks
from expomask.workflows.training import run_evaluation, run_training

TRAIN_LOSSES = [LossName.BCE.value, LossName.FOCAL.value, LossName.DICE_BCE.value, LossName.DICE.value]


def domain_errors(func):
    """Report domain and validation errors as a clean CLI failure (exit 1)."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ExpoMaskError, FileNotFoundError, ValidationError) as e:
            raise click.ClickException(str(e)) from e
    return wrapper


def parse_size(value: str) -> Tuple[int, int]:
    try:
        height, width = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected HxW, got {value!r}")
    return height, width


def build_ranges(low_range: Optional[str], high_range: Optional[str]) -> ThresholdRanges:
    values = {}
    if low_range:
        values["low_range"] = low_range
    if high_range:
        values["high_range"] = high_range
    return ThresholdRanges(**values)


range_options = [
    click.option("--low-range", default=None, help="Manual range for low exposure, A:B (default 120:255)"),
    click.option("--high-range", default=None, help="Manual range for high exposure, A:B (default 0:200)"),
]


def with_ranges(func):
    for option in reversed(range_options):
        func = option(func)
    return func


@click.group()
@click.version_option(__version__, prog_name="expomask")
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level")
def cli(verbose: bool):
    """Well-exposed region masks for multi-exposure LDR stacks."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--count", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--size", default="64x64", show_default=True, help="Scene size HxW")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(0, 2**64 - 1))
@click.option("--blobs", default=4, show_default=True, type=int, help="Radiance blobs per scene")
@click.option("--noise", default=2.0, show_default=True, type=float, help="Noise sigma in 8-bit units")
@click.option("--gamma", default=2.2, show_default=True, type=float)
@click.option("--radiance", is_flag=True, help="Also store radiance.npy per scene")
@domain_errors
def synth(out_dir: Path, count: int, size: str, seed: int, blobs: int, noise: float, gamma: float, radiance: bool):
    """Write synthetic low/mid/high exposure stacks."""
    params = SynthSceneParams(size=parse_size(size), blob_count=blobs, noise_sigma=noise, gamma=gamma, seed=seed)
    click.echo(f"🎨 Synthesizing {count} scenes into {out_dir}...")
    written = write_synthetic_dataset(out_dir, count, params, save_radiance=radiance)
    click.echo(f"   ✓ {len(written)} scenes written")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--method", type=click.Choice([m.value for m in GtMethod]), default=GtMethod.MANUAL.value, show_default=True)
@click.option("--exposure", type=click.Choice(list(EXPOSURES)), required=True)
@with_ranges
@domain_errors
def gt(data_dir: Path, method: str, exposure: str, low_range: Optional[str], high_range: Optional[str]):
    """Write gt_<exposure>.png masks into every scene."""
    click.echo(f"🎭 Generating {method} gt_{exposure} masks...")
    count = write_gt_masks(data_dir, GtMethod(method), exposure, build_ranges(low_range, high_range))
    click.echo(f"   ✓ {count} masks written")


@cli.command("compare-gt")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False, path_type=Path))
@with_ranges
@domain_errors
def compare_gt(data_dir: Path, out_csv: Path, low_range: Optional[str], high_range: Optional[str]):
    """Compare manual and Otsu mask coverage per scene."""
    click.echo("🔍 Comparing manual and Otsu ground truth...")
    rows = compare_gt_methods(data_dir, build_ranges(low_range, high_range))
    write_coverage_csv(rows, out_csv)
    click.echo(f"   ✓ {len(rows)} rows written to {out_csv}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--exposure", type=click.Choice(["low", "high"]), default=None)
@click.option("--gt", "gt_method", type=click.Choice([m.value for m in GtMethod]), default=None)
@click.option("--loss", type=click.Choice(TRAIN_LOSSES), default=None)
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--model-out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--input-size", type=int, default=None)
@click.option("--channel-scale", type=int, default=None)
@click.option("--dropout", "dropout_rate", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--input-channels", type=click.Choice(["1", "3"]), default=None)
@click.option("--report", "report_csv", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Append the held-out metric row to this CSV")
@with_ranges
@domain_errors
def train(data_dir: Path, exposure: Optional[str], gt_method: Optional[str], loss: Optional[str],
          config_file: Optional[Path], model_out: Path, report_csv: Optional[Path], **flags):
    """Train one U-Net for one exposure class."""
    overrides = dict(flags, exposure_class=exposure, gt_method=gt_method, loss=loss)
    cfg = load_train_config(config_file, overrides)

    click.echo(f"\n{'=' * 60}")
    click.echo(f"Training {cfg.exposure_class.value}-exposure U-Net ({cfg.loss.value}, {cfg.gt_method.value} GT)")
    click.echo(f"{'=' * 60}")
    click.echo(f"\n🧠 {cfg.epochs} epochs, batch {cfg.batch_size}, lr {cfg.lr}, input {cfg.input_size}px")
    _, report = run_training(data_dir, cfg, model_out)
    if report.epoch_losses:
        click.echo(f"   ✓ Loss {report.epoch_losses[0]:.6f} -> {report.epoch_losses[-1]:.6f}")
    click.echo(f"   ✓ Model saved to {model_out} ({report.seconds:.1f}s)")

    if report.metrics is not None:
        m = report.metrics
        click.echo(f"\n📊 Metrics on the {report.evaluated_split} split:")
        click.echo(f"   Dice {m.dice:.4f}  Jaccard {m.jaccard:.4f}  Sens {m.sensitivity:.4f}  "
                   f"Spec {m.specificity:.4f}  AUC {m.auc:.4f}  AVG {m.avg:.4f}")
        if report.roc_auc is not None:
            click.echo(f"   ROC AUC (diagnostic) {report.roc_auc:.4f}")
        if report_csv is not None:
            write_report([m], report_csv, append=True)
            click.echo(f"   ✓ Row appended to {report_csv}")


@cli.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--report", "report_csv", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--per-image", is_flag=True, help="Average per-image metrics instead of pooling counts")
@click.option("--append", is_flag=True, help="Add the row to an existing report")
@domain_errors
def eval_command(data_dir: Path, model_path: Path, report_csv: Path, per_image: bool, append: bool):
    """Score a trained model and write the report row."""
    click.echo(f"📊 Evaluating {model_path} on {data_dir}...")
    row = run_evaluation(data_dir, model_path, per_image=per_image)
    write_report([row], report_csv, append=append)
    click.echo(f"   ✓ {row.loss_name}: Dice {row.dice:.4f}, AVG {row.avg:.4f} -> {report_csv}")


@cli.command()
@click.option("--scale", default="8", show_default=True, type=click.Choice(["1", "2", "4", "8", "16"]),
              help="Channel scale of the toy U-Net")
@click.option("--samples", default=120, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
@click.pass_context
def gradcheck(ctx: click.Context, scale: str, samples: int, seed: int):
    """Finite-difference check of every layer, loss and the toy U-Net."""
    click.echo("🧪 Running gradient checks...")
    results = run_gradcheck(channel_scale=int(scale), samples=samples, seed=seed)
    for result in results:
        mark = "✓" if result.passed else "✗"
        click.echo(f"   {mark} {result.name}: {result.checked} checked, max rel. error {result.max_rel_error:.2e}")
    failed = [r for r in results if not r.passed]
    if failed:
        click.echo(f"❌ {len(failed)} check(s) failed", err=True)
        ctx.exit(1)
    click.echo("✅ All gradient checks passed")


@cli.command()
@click.option("--host", default=None, help=f"Bind address (default {settings.host})")
@click.option("--port", default=None, type=int, help=f"Port (default {settings.port})")
def serve(host: Optional[str], port: Optional[int]):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("expomask.main:app", host=host or settings.host, port=port or settings.port, reload=settings.debug)


main = cli

if __name__ == "__main__":
    cli()
