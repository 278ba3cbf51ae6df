"""
Evaluation metrics, spatial error heatmaps, model comparison and ablations.

Every aggregate in an EvalReport is a function of its per-sample rows, so a
report read back from ``per_sample.csv`` reproduces the same numbers.
"""

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import RunConfig
from .data import Dataset, Sample, SceneImage, atomic_write_bytes, atomic_write_text, split_by_scene
from .errors import ConfigError, DataError, StatisticsError
from .model import BaselineKind, GazeModel, forward_batch, targets
from .sphere import angular_errors_deg
from .stats import bonferroni, cohens_d, confidence_interval, paired_t_test, pearson, sign_test
from .train import train

logger = logging.getLogger(__name__)

PER_SAMPLE_HEADER = ["idx", "scene_id", "mse", "ang_deg", "px_dist", "conf", "region"]
ACC_THRESHOLDS_PX = (10, 20, 50)
CENTER_HALF_WIDTH = 0.25


@dataclass(frozen=True)
class SampleMetrics:
    idx: int
    scene_id: str
    mse: float
    ang_deg: float
    px_dist: float
    conf: float
    region: str
    gt_x: float = float("nan")
    gt_y: float = float("nan")


def region_of(x: float, y: float) -> str:
    """``center`` inside the central half of both axes, else ``peripheral``."""
    if abs(x - 0.5) < CENTER_HALF_WIDTH and abs(y - 0.5) < CENTER_HALF_WIDTH:
        return "center"
    return "peripheral"


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if value is not None and math.isfinite(value) else None


@dataclass
class EvalReport:
    """Per-sample rows plus the aggregates derived from them."""

    rows: List[SampleMetrics]
    image_w: int
    image_h: int
    kind: str = ""

    def __post_init__(self) -> None:
        if not self.rows:
            raise DataError("evaluation set is empty")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    @property
    def mse(self) -> float:
        return float(self.column("mse").mean())

    @property
    def mean_angular_error(self) -> float:
        return float(self.column("ang_deg").mean())

    @property
    def median_angular_error(self) -> float:
        return float(np.median(self.column("ang_deg")))

    def accuracy_at(self, k_px: float) -> float:
        """Fraction of samples with pixel distance <= ``k_px``."""
        return float((self.column("px_dist") <= k_px).mean())

    @property
    def mean_confidence(self) -> float:
        return float(self.column("conf").mean())

    def region_error(self, region: str) -> float:
        errors = [r.ang_deg for r in self.rows if r.region == region]
        return float(np.mean(errors)) if errors else float("nan")

    @property
    def confidence_correlation(self) -> float:
        """Pearson correlation between confidence and negative pixel distance."""
        return pearson(self.column("conf"), -self.column("px_dist"))

    def calibration_sign_test(self, tau: float) -> float:
        """Sign-test p-value that samples within ``tau`` carry more confidence than the rest.

        Each accurate sample's confidence is compared with the median
        confidence of the inaccurate ones.
        """
        distance = np.sqrt(self.column("mse"))
        conf = self.column("conf")
        near, far = conf[distance < tau], conf[distance >= tau]
        if near.size == 0 or far.size == 0:
            raise StatisticsError(
                f"calibration needs samples on both sides of tau={tau} ({near.size} within, {far.size} beyond)"
            )
        return sign_test(near - float(np.median(far)))

    def angular_ci(self, level: float = 0.95) -> Tuple[float, float]:
        try:
            return confidence_interval(self.column("ang_deg"), level)
        except StatisticsError:
            return float("nan"), float("nan")

    def aggregates(self) -> Dict[str, Any]:
        low, high = self.angular_ci()
        out: Dict[str, Any] = {
            "kind": self.kind,
            "n_samples": len(self.rows),
            "image_w": self.image_w,
            "image_h": self.image_h,
            "mse": self.mse,
            "mean_angular_error_deg": self.mean_angular_error,
            "median_angular_error_deg": self.median_angular_error,
            "angular_error_ci95_deg": [_finite_or_none(low), _finite_or_none(high)],
        }
        for k in ACC_THRESHOLDS_PX:
            out[f"acc_at_{k}px"] = self.accuracy_at(k)
        out.update(
            {
                "mean_confidence": self.mean_confidence,
                "center_angular_error_deg": _finite_or_none(self.region_error("center")),
                "peripheral_angular_error_deg": _finite_or_none(self.region_error("peripheral")),
                "n_center": sum(r.region == "center" for r in self.rows),
                "confidence_accuracy_correlation": _finite_or_none(self.confidence_correlation),
            }
        )
        return out


def build_report(
    samples: Sequence[Sample],
    pred: np.ndarray,
    conf: np.ndarray,
    image_w: int,
    image_h: int,
    kind: str = "",
) -> EvalReport:
    """Per-sample metrics from predictions [N x 2] and confidences [N]."""
    if not samples:
        raise DataError("evaluation set is empty")
    gt = targets(samples)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    conf = np.asarray(conf, dtype=np.float64).reshape(-1)
    diff = pred - gt
    sq = (diff * diff).sum(axis=1)
    ang = angular_errors_deg(pred, gt)
    px = np.hypot(diff[:, 0] * image_w, diff[:, 1] * image_h)
    rows = [
        SampleMetrics(
            idx=k,
            scene_id=s.scene_id,
            mse=float(sq[k]),
            ang_deg=float(ang[k]),
            px_dist=float(px[k]),
            conf=float(conf[k]),
            region=region_of(s.target.x, s.target.y),
            gt_x=s.target.x,
            gt_y=s.target.y,
        )
        for k, s in enumerate(samples)
    ]
    return EvalReport(rows, image_w, image_h, kind)


def predict_samples(
    model: GazeModel,
    samples: Sequence[Sample],
    scenes: Mapping[str, SceneImage],
    batch_size: int = 64,
) -> Tuple[np.ndarray, np.ndarray]:
    """Eval-mode predictions for every sample, in order."""
    gazes, confs = [], []
    for start in range(0, len(samples), batch_size):
        gaze, conf = forward_batch(model, samples[start : start + batch_size], scenes)
        gazes.append(gaze.data)
        confs.append(conf.data)
    return np.concatenate(gazes), np.concatenate(confs)


def evaluate(
    model: GazeModel,
    samples: Sequence[Sample],
    scenes: Mapping[str, SceneImage],
    batch_size: int = 64,
) -> EvalReport:
    """Score ``model`` on ``samples`` with dropout off."""
    if not samples:
        raise DataError("evaluation set is empty")
    pred, conf = predict_samples(model, samples, scenes, batch_size)
    vit = model.config.vit
    report = build_report(samples, pred, conf, vit.image_w, vit.image_h, model.kind.value)
    logger.info(
        "Evaluated %s on %d samples: mean angular error %.3f deg, Acc@10px %.3f",
        model.kind.value, len(report), report.mean_angular_error, report.accuracy_at(10),
    )
    return report


# heatmap


def spatial_heatmap(report: EvalReport, rows: int, cols: int) -> np.ndarray:
    """Mean angular error per ground-truth grid cell; empty cells are NaN."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"heatmap grid must be at least 1x1, got {rows}x{cols}")
    if any(math.isnan(r.gt_x) or math.isnan(r.gt_y) for r in report.rows):
        raise DataError("report carries no ground-truth positions; heatmaps need a fresh evaluation")
    sums = np.zeros((rows, cols))
    counts = np.zeros((rows, cols))
    for r in report.rows:
        i = min(int(r.gt_y * rows), rows - 1)
        j = min(int(r.gt_x * cols), cols - 1)
        sums[i, j] += r.ang_deg
        counts[i, j] += 1
    grid = np.full((rows, cols), np.nan)
    filled = counts > 0
    grid[filled] = sums[filled] / counts[filled]
    return grid


def format_heatmap_csv(grid: np.ndarray) -> str:
    """One CSV row per grid row; absent cells are empty fields."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in grid:
        writer.writerow(["" if math.isnan(v) else f"{v:.6f}" for v in row])
    return buf.getvalue()


def _false_color(t: np.ndarray) -> np.ndarray:
    """Blue (low) through green to red (high) for t in [0, 1]."""
    r = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    g = 1.0 - np.abs(2.0 * t - 1.0)
    b = np.clip(1.0 - 2.0 * t, 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def heatmap_ppm(grid: np.ndarray, cell_px: int = 16) -> bytes:
    """False-color P6 image of ``grid``; absent cells are mid gray."""
    present = ~np.isnan(grid)
    rgb = np.full(grid.shape + (3,), 0.5)
    if present.any():
        lo, hi = float(np.nanmin(grid)), float(np.nanmax(grid))
        t = np.zeros_like(grid) if hi == lo else (np.nan_to_num(grid, nan=lo) - lo) / (hi - lo)
        rgb[present] = _false_color(t)[present]
    pixels = np.rint(rgb * 255.0).astype(np.uint8)
    pixels = np.repeat(np.repeat(pixels, cell_px, axis=0), cell_px, axis=1)
    h, w = pixels.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_heatmap(out_dir: Union[str, Path], grid: np.ndarray) -> None:
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / "heatmap.csv", format_heatmap_csv(grid))
    atomic_write_bytes(out_dir / "heatmap.ppm", heatmap_ppm(grid))


# report files


def format_per_sample_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PER_SAMPLE_HEADER)
    for r in report.rows:
        writer.writerow([r.idx, r.scene_id, repr(r.mse), repr(r.ang_deg), repr(r.px_dist), repr(r.conf), r.region])
    return buf.getvalue()


def read_per_sample_csv(path: Union[str, Path], image_w: int, image_h: int) -> EvalReport:
    """Rebuild a report (without ground-truth positions) from ``per_sample.csv``."""
    path = Path(path)
    rows: List[SampleMetrics] = []
    try:
        with open(path, newline="", encoding="utf-8") as f:
            lines = list(csv.reader(f))
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not a UTF-8 text file ({exc.reason} at byte {exc.start})") from exc
    if not lines or lines[0] != PER_SAMPLE_HEADER:
        raise DataError(f"{path}:1: expected header {','.join(PER_SAMPLE_HEADER)}")
    for lineno, fields in enumerate(lines[1:], start=2):
        try:
            idx, sid, mse, ang, px, conf, region = fields
            rows.append(SampleMetrics(int(idx), sid, float(mse), float(ang), float(px), float(conf), region))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed row ({exc})") from exc
    return EvalReport(rows, image_w, image_h)


def _dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_report(
    report: EvalReport, out_dir: Union[str, Path], grid: Tuple[int, int] = (4, 8)
) -> Path:
    """Write report.json, per_sample.csv, heatmap.csv and heatmap.ppm under ``out_dir``."""
    out_dir = Path(out_dir)
    atomic_write_text(out_dir / "report.json", _dump_json(report.aggregates()))
    atomic_write_text(out_dir / "per_sample.csv", format_per_sample_csv(report))
    write_heatmap(out_dir, spatial_heatmap(report, *grid))
    logger.info("Wrote evaluation report to %s", out_dir)
    return out_dir


# comparison


@dataclass
class MetricComparison:
    metric: str
    mean_a: float
    mean_b: float
    t_stat: float
    p_value: float
    cohens_d: float
    significant: bool = False


@dataclass
class Comparison:
    """Paired comparison of two reports on the same samples."""

    kind_a: str
    kind_b: str
    n_samples: int
    alpha: float
    corrected_alpha: float
    metrics: List[MetricComparison] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind_a": self.kind_a,
            "kind_b": self.kind_b,
            "n_samples": self.n_samples,
            "alpha": self.alpha,
            "bonferroni_alpha": self.corrected_alpha,
            "metrics": {
                m.metric: {
                    "mean_a": m.mean_a,
                    "mean_b": m.mean_b,
                    "t_stat": m.t_stat,
                    "p_value": m.p_value,
                    "cohens_d": m.cohens_d,
                    "significant": m.significant,
                }
                for m in self.metrics
            },
        }


def compare_reports(report_a: EvalReport, report_b: EvalReport, alpha: float = 0.05) -> Comparison:
    """Paired t-test and Cohen's d on angular and squared errors, Bonferroni over both."""
    if len(report_a) != len(report_b) or any(
        ra.scene_id != rb.scene_id for ra, rb in zip(report_a.rows, report_b.rows)
    ):
        raise DataError("reports must cover the same samples in the same order to be paired")
    metrics = []
    for column, name in (("ang_deg", "angular_error_deg"), ("mse", "squared_error")):
        a, b = report_a.column(column), report_b.column(column)
        test = paired_t_test(a, b)
        metrics.append(
            MetricComparison(name, float(a.mean()), float(b.mean()), test.t_stat, test.p_value, cohens_d(a, b))
        )
    threshold, flags = bonferroni([m.p_value for m in metrics], alpha)
    for m, flag in zip(metrics, flags):
        m.significant = flag
    return Comparison(report_a.kind, report_b.kind, len(report_a), alpha, threshold, metrics)


def write_comparison(comparison: Comparison, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / "comparison.json"
    atomic_write_text(path, _dump_json(comparison.to_dict()))
    return path


# ablation

ABLATION_KINDS = (
    BaselineKind.FULL,
    BaselineKind.TEMPORAL_ONLY,
    BaselineKind.SPATIAL_ONLY,
    BaselineKind.CONCAT_FUSION,
    BaselineKind.CENTER_FIXED,
)


@dataclass
class AblationRow:
    kind: str
    mean_angular_error: float
    median_angular_error: float
    mse: float
    acc_at_10px: float
    mean_confidence: float
    p_value: Optional[float] = None
    cohens_d: Optional[float] = None
    significant: Optional[bool] = None


@dataclass
class AblationTable:
    rows: List[AblationRow]
    n_test_samples: int
    corrected_alpha: float
    reports: Dict[str, EvalReport] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_test_samples": self.n_test_samples,
            "bonferroni_alpha": self.corrected_alpha,
            "rows": [
                {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in vars(r).items()}
                for r in self.rows
            ],
        }

    def format_lines(self) -> List[str]:
        lines = []
        for r in self.rows:
            p = "-" if r.p_value is None else f"{r.p_value:.3g}"
            d = "-" if r.cohens_d is None else f"{r.cohens_d:.3f}"
            lines.append(
                f"{r.kind:<14} ang={r.mean_angular_error:.3f} med={r.median_angular_error:.3f} "
                f"mse={r.mse:.5f} acc10={r.acc_at_10px:.3f} conf={r.mean_confidence:.3f} p={p} d={d}"
            )
        return lines


def ablation(
    dataset: Dataset,
    cfg: RunConfig,
    kinds: Sequence[Union[str, BaselineKind]] = ABLATION_KINDS,
    alpha: float = 0.05,
) -> AblationTable:
    """Train every kind on one scene split and compare each against ``full`` on the test scenes."""
    kinds = [BaselineKind.parse(k) for k in kinds]
    if BaselineKind.FULL not in kinds:
        kinds.insert(0, BaselineKind.FULL)
    split = split_by_scene(list(dataset.scenes), cfg.train.split, cfg.train.seed)
    test_samples = dataset.samples(split[2], cfg.model.temporal.window)
    if not test_samples:
        raise DataError("test split is empty; ablation needs held-out scenes")

    reports: Dict[str, EvalReport] = {}
    for kind in kinds:
        result = train(kind, dataset, cfg, split=split)
        reports[kind.value] = evaluate(result.model, test_samples, dataset.scenes)

    full = reports[BaselineKind.FULL.value]
    rows: List[AblationRow] = []
    p_values: List[Tuple[int, float]] = []
    for kind in kinds:
        rep = reports[kind.value]
        row = AblationRow(
            kind=kind.value,
            mean_angular_error=rep.mean_angular_error,
            median_angular_error=rep.median_angular_error,
            mse=rep.mse,
            acc_at_10px=rep.accuracy_at(10),
            mean_confidence=rep.mean_confidence,
        )
        if kind is not BaselineKind.FULL:
            a, b = rep.column("ang_deg"), full.column("ang_deg")
            try:
                row.p_value = paired_t_test(a, b).p_value
                row.cohens_d = cohens_d(a, b)
                p_values.append((len(rows), row.p_value))
            except StatisticsError as exc:
                logger.warning("No significance test for %s vs full: %s", kind.value, exc)
        rows.append(row)

    threshold, flags = bonferroni([p for _, p in p_values], alpha)
    for (pos, _), flag in zip(p_values, flags):
        rows[pos].significant = flag
    return AblationTable(rows, len(test_samples), threshold, reports)


def write_ablation(table: AblationTable, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / "ablation.json"
    atomic_write_text(path, _dump_json(table.to_dict()))
    return path
