"""
Command-line interface for SphereGaze.

stdout carries results only; diagnostics go to stderr. Exit codes: 0 success,
1 usage or config error, 2 data error, 3 numeric failure.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click

from . import __version__
from .config import PRESETS, RunConfig, load_config
from .core import SPLITS, GazePipeline
from .errors import NumericError, SphereGazeError
from .logs import setup_logging
from .model import BaselineKind

logger = logging.getLogger(__name__)

MODEL_CHOICES = ["full", "temporal", "spatial", "concat", "center",
                 "temporal_only", "spatial_only", "concat_fusion", "center_fixed"]
GRADCHECK_TOLERANCE = 1e-4


class SphereGazeGroup(click.Group):
    """Group that maps package errors and usage errors onto the documented exit codes."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):  # type: ignore[override]
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.ClickException as exc:
            exc.show()
            sys.exit(1)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        except SphereGazeError as exc:
            click.echo(f"Error: {exc}", err=True)
            sys.exit(exc.exit_code)
        sys.exit(rv if isinstance(rv, int) else 0)


def _parse_grid(ctx: click.Context, param: click.Parameter, value: str) -> Tuple[int, int]:
    try:
        rows, cols = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected RxC (e.g. 4x8), got '{value}'") from None
    if rows < 1 or cols < 1:
        raise click.BadParameter(f"grid dimensions must be positive, got '{value}'")
    return rows, cols


def _config(
    config_file: Optional[str], preset: Optional[str], overrides: Dict[str, Dict[str, Any]]
) -> RunConfig:
    """Preset < config file < flags."""
    cleaned = {section: {k: v for k, v in values.items() if v is not None} for section, values in overrides.items()}
    cleaned = {section: values for section, values in cleaned.items() if values}
    return load_config(config_file, preset=preset or "desk", overrides=cleaned)


config_option = click.option(
    "--config", "config_file", type=click.Path(exists=True, dir_okay=False),
    help="JSON or YAML config file (sections vit, temporal, fusion, loss, train)",
)
preset_option = click.option(
    "--preset", type=click.Choice(sorted(PRESETS)), default=None,
    help="Base preset when the config file names none (default: desk)",
)


@click.group(cls=SphereGazeGroup)
@click.version_option(version=__version__, prog_name="spheregaze")
@click.option("--log-level", default="WARNING", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Logging level for stderr diagnostics")
@click.option("--verbose", "-v", is_flag=True, help="Shortcut for --log-level INFO")
def main(log_level: str, verbose: bool):
    """SphereGaze - gaze prediction on 360-degree scenes."""
    setup_logging("INFO" if verbose and log_level.upper() == "WARNING" else log_level)


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output dataset directory")
@click.option("--scenes", "n_scenes", required=True, type=click.IntRange(min=0), help="Number of scenes")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(0, 2**64 - 1), help="Generator seed")
@click.option("--w", "width", default=512, show_default=True, type=int, help="Scene width in pixels")
@click.option("--h", "height", default=256, show_default=True, type=int, help="Scene height in pixels")
@click.option("--blobs", default=4, show_default=True, type=click.IntRange(min=1), help="Blobs per scene")
@click.option("--length", default=40, show_default=True, type=click.IntRange(min=11), help="Gaze points per scanpath")
@click.option("--momentum", is_flag=True, help="Momentum-driven scanpaths instead of blob-seeking ones")
def synth(out: str, n_scenes: int, seed: int, width: int, height: int, blobs: int, length: int, momentum: bool):
    """Generate a synthetic scene + scanpath dataset."""
    dataset = GazePipeline().synth(out, n_scenes, seed, width, height, blobs, length, momentum)
    click.echo(f"{len(dataset.scenes)} scenes written to {out}", err=True)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False), help="Dataset directory")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Checkpoint file to write")
@click.option("--model", "kind", default="full", show_default=True, type=click.Choice(MODEL_CHOICES), help="Model variant")
@config_option
@preset_option
@click.option("--epochs", type=click.IntRange(min=0), help="Override train.epochs")
@click.option("--lr", type=float, help="Override train.lr")
@click.option("--batch-size", type=click.IntRange(min=1), help="Override train.batch_size")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Override train.seed")
@click.option("--progress/--no-progress", default=None, help="Show a progress bar per epoch")
def train(data, out, kind, config_file, preset, epochs, lr, batch_size, seed, progress):
    """Train a model and save a checkpoint."""
    cfg = _config(config_file, preset, {
        "train": {"epochs": epochs, "lr": lr, "batch_size": batch_size, "seed": seed, "progress": progress},
    })
    result = GazePipeline(cfg).train(data, out, BaselineKind.parse(kind))
    if result.history:
        last = result.history[-1]
        click.echo(f"epoch {last.epoch}: train L={last.train_total:.6f}", err=True)
    click.echo(out)


@main.command(name="eval")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False), help="Dataset directory")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint to evaluate")
@click.option("--report", "report_dir", required=True, type=click.Path(file_okay=False), help="Report output directory")
@click.option("--compare", type=click.Path(exists=True, dir_okay=False), help="Second checkpoint for a paired comparison")
@click.option("--split", default="test", show_default=True, type=click.Choice(SPLITS), help="Scene split to evaluate")
@click.option("--grid", default="4x8", show_default=True, callback=_parse_grid, help="Heatmap grid RxC")
def evaluate_cmd(data, ckpt, report_dir, compare, split, grid):
    """Evaluate a checkpoint and write report.json, per_sample.csv and heatmaps."""
    report, comparison = GazePipeline().report(data, ckpt, report_dir, compare, split, grid)
    click.echo(
        f"n={len(report)} mean_ang={report.mean_angular_error:.6f} "
        f"median_ang={report.median_angular_error:.6f} mse={report.mse:.6f} "
        f"acc10={report.accuracy_at(10):.6f}"
    )
    if comparison is not None:
        for m in comparison.metrics:
            click.echo(f"{m.metric} t={m.t_stat:.6f} p={m.p_value:.6g} d={m.cohens_d:.6f} significant={m.significant}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint")
@click.option("--scene", required=True, type=click.Path(exists=True, dir_okay=False), help="Scene PPM")
@click.option("--gaze", required=True, type=click.Path(exists=True, dir_okay=False), help="Gaze CSV (last 10 rows used)")
def predict(ckpt, scene, gaze):
    """Print the predicted next gaze point as 'x y conf'."""
    x, y, conf = GazePipeline().predict(ckpt, scene, gaze)
    click.echo(f"{x:.6f} {y:.6f} {conf:.6f}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False), help="Dataset directory")
@click.option("--grid", default="4x8", show_default=True, callback=_parse_grid, help="Grid RxC")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.option("--split", default="test", show_default=True, type=click.Choice(SPLITS), help="Scene split to evaluate")
def heatmap(ckpt, data, grid, out, split):
    """Write heatmap.csv and heatmap.ppm of mean angular error per cell."""
    GazePipeline().heatmap(data, ckpt, grid, out, split)
    click.echo(str(Path(out) / "heatmap.csv"))


@main.command()
@config_option
@preset_option
@click.option("--coords", default=3, show_default=True, type=click.IntRange(min=1), help="Coordinates per parameter tensor")
def gradcheck(config_file, preset, coords):
    """Finite-difference check of the total loss; prints the max relative error."""
    cfg = _config(config_file, preset, {})
    result = GazePipeline(cfg).gradcheck(coords)
    click.echo(f"{result.max_rel_error:.3e}")
    if not result.passed(GRADCHECK_TOLERANCE):
        raise NumericError(
            f"max relative error {result.max_rel_error:.3e} exceeds {GRADCHECK_TOLERANCE:g}"
        )


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False), help="Dataset directory")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory for ablation.json")
@config_option
@preset_option
@click.option("--epochs", type=click.IntRange(min=0), help="Override train.epochs")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Override train.seed")
def ablate(data, out, config_file, preset, epochs, seed):
    """Train every model variant on one split and compare against the full model."""
    cfg = _config(config_file, preset, {"train": {"epochs": epochs, "seed": seed}})
    table = GazePipeline(cfg).ablate(data, out)
    for line in table.format_lines():
        click.echo(line)


if __name__ == "__main__":
    main()
