"""
Core SphereGaze workflows shared by the CLI and library users.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import DESK, RunConfig
from .data import Dataset, Sample, load_dataset, read_gaze_csv, read_ppm, save_dataset, split_by_scene
from .errors import DataError
from .evaluate import (
    AblationTable,
    Comparison,
    EvalReport,
    ablation,
    compare_reports,
    evaluate,
    spatial_heatmap,
    write_ablation,
    write_comparison,
    write_heatmap,
    write_report,
)
from .gradcheck import GradCheckResult, run_gradcheck
from .model import BaselineKind, model_forward
from .synth import generate_dataset
from .train import TrainResult, train

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SPLITS = ("train", "val", "test", "all")


class GazePipeline:
    """Dataset synthesis, training, evaluation and prediction behind one config."""

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or DESK

    # data

    def synth(
        self,
        out: PathLike,
        n_scenes: int,
        seed: int,
        w: int = 512,
        h: int = 256,
        n_blobs: int = 4,
        length: int = 40,
        momentum: bool = False,
    ) -> Dataset:
        """Generate a synthetic dataset and write it under ``out``."""
        dataset = generate_dataset(n_scenes, seed, w=w, h=h, n_blobs=n_blobs, length=length, momentum=momentum)
        save_dataset(out, dataset)
        return dataset

    def load(self, root: PathLike) -> Dataset:
        vit = self.config.model.vit
        dataset = load_dataset(root, patch_px=vit.patch_px)
        for sid, image in dataset.scenes.items():
            if (image.height, image.width) != (vit.image_h, vit.image_w):
                raise DataError(
                    f"scene '{sid}' is {image.width}x{image.height}, "
                    f"model expects {vit.image_w}x{vit.image_h}"
                )
        return dataset

    def samples(self, dataset: Dataset, split: str = "test") -> List[Sample]:
        """Samples of one scene-level split, using the configured seed and fractions."""
        if split not in SPLITS:
            raise DataError(f"unknown split '{split}' (choose from {', '.join(SPLITS)})")
        window = self.config.model.temporal.window
        if split == "all":
            return dataset.samples(window=window)
        train_ids, val_ids, test_ids = split_by_scene(
            list(dataset.scenes), self.config.train.split, self.config.train.seed
        )
        ids = {"train": train_ids, "val": val_ids, "test": test_ids}[split]
        found = dataset.samples(ids, window)
        if not found:
            raise DataError(f"the {split} split of this dataset has no samples")
        return found

    # training

    def train(self, data: PathLike, out: PathLike, kind: Union[str, BaselineKind] = "full") -> TrainResult:
        dataset = self.load(data)
        if not dataset.records:
            raise DataError(f"no scenes found under {data}")
        result = train(kind, dataset, self.config)
        save_checkpoint(result.model, self.config, out)
        return result

    # evaluation

    @staticmethod
    def checkpoint(path: PathLike) -> Checkpoint:
        return load_checkpoint(path)

    def evaluate(self, data: PathLike, ckpt: PathLike, split: str = "test") -> EvalReport:
        loaded = load_checkpoint(ckpt)
        pipeline = GazePipeline(loaded.config)
        dataset = pipeline.load(data)
        return evaluate(loaded.model, pipeline.samples(dataset, split), dataset.scenes)

    def report(
        self,
        data: PathLike,
        ckpt: PathLike,
        out: PathLike,
        compare: Optional[PathLike] = None,
        split: str = "test",
        grid: Tuple[int, int] = (4, 8),
    ) -> Tuple[EvalReport, Optional[Comparison]]:
        """Evaluate ``ckpt`` and write its report; optionally compare against a second checkpoint."""
        report = self.evaluate(data, ckpt, split)
        write_report(report, out, grid)
        comparison = None
        if compare is not None:
            other = self.evaluate(data, compare, split)
            comparison = compare_reports(report, other)
            write_comparison(comparison, out)
        return report, comparison

    def heatmap(self, data: PathLike, ckpt: PathLike, grid: Tuple[int, int], out: PathLike, split: str = "test"):
        grid_values = spatial_heatmap(self.evaluate(data, ckpt, split), *grid)
        write_heatmap(out, grid_values)
        return grid_values

    def predict(self, ckpt: PathLike, scene: PathLike, gaze: PathLike) -> Tuple[float, float, float]:
        """Predict the next gaze point from the last ``window`` rows of a gaze CSV."""
        loaded = load_checkpoint(ckpt)
        vit = loaded.config.model.vit
        image = read_ppm(scene)
        if (image.height, image.width) != (vit.image_h, vit.image_w):
            raise DataError(f"{scene}: {image.width}x{image.height}, model expects {vit.image_w}x{vit.image_h}")
        points = read_gaze_csv(gaze)
        window = loaded.config.model.temporal.window
        if len(points) > window:
            points = points[-window:]
        return model_forward(image, points, loaded.model).as_tuple()

    # diagnostics

    def gradcheck(self, coords_per_param: int = 3) -> GradCheckResult:
        return run_gradcheck(self.config, coords_per_param=coords_per_param, seed=self.config.train.seed)

    def ablate(self, data: PathLike, out: PathLike) -> AblationTable:
        dataset = self.load(data)
        table = ablation(dataset, self.config)
        write_ablation(table, out)
        return table
