import json
import math
from dataclasses import replace

import numpy as np
import pytest

from spheregaze.data import GazePoint, Sample
from spheregaze.errors import ConfigError, DataError, StatisticsError
from spheregaze.evaluate import (
    ablation,
    build_report,
    compare_reports,
    evaluate,
    format_heatmap_csv,
    heatmap_ppm,
    read_per_sample_csv,
    region_of,
    spatial_heatmap,
    write_ablation,
    write_comparison,
    write_report,
)
from spheregaze.config import DESK
from spheregaze.model import build_model, targets
from spheregaze.stats import paired_t_test
from spheregaze.synth import generate_dataset

from conftest import make_window


WINDOW = tuple(make_window(10))


def sample_at(x, y, scene_id="s"):
    return Sample(scene_id, WINDOW, GazePoint(t_ms=1000.0, x=x, y=y))


def noisy_report(samples, seed, scale=0.05, kind=""):
    rng = np.random.default_rng(seed)
    pred = np.clip(targets(samples) + rng.normal(0.0, scale, size=(len(samples), 2)), 0.0, 1.0)
    return build_report(samples, pred, rng.uniform(size=len(samples)), 512, 256, kind)


@pytest.fixture
def samples(tiny_dataset):
    return tiny_dataset.samples()


class TestMetrics:
    def test_perfect_predictor(self, samples):
        report = build_report(samples, targets(samples), np.ones(len(samples)), 512, 256)
        assert report.mse == 0.0
        assert report.mean_angular_error == 0.0
        assert report.median_angular_error == 0.0
        assert all(report.accuracy_at(k) == 1.0 for k in (10, 20, 50))

    def test_pixel_distance_uses_image_size(self):
        report = build_report([sample_at(0.5, 0.5)], [[0.5 + 3 / 512, 0.5 + 4 / 256]], [1.0], 512, 256)
        assert report.rows[0].px_dist == pytest.approx(5.0)
        assert report.accuracy_at(5) == 1.0
        assert report.accuracy_at(4.9) == 0.0

    def test_accuracy_thresholds_are_nested(self, samples):
        for seed in range(10):
            report = noisy_report(samples, seed, scale=0.1)
            assert report.accuracy_at(10) <= report.accuracy_at(20) <= report.accuracy_at(50)

    def test_regions(self):
        assert region_of(0.5, 0.5) == "center"
        assert region_of(0.74, 0.26) == "center"
        assert region_of(0.75, 0.5) == "peripheral"
        assert region_of(0.1, 0.5) == "peripheral"

    def test_center_and_peripheral_errors(self):
        report = build_report(
            [sample_at(0.5, 0.5), sample_at(0.1, 0.5)], [[0.5, 0.5], [0.2, 0.5]], [1.0, 1.0], 512, 256
        )
        aggregates = report.aggregates()
        assert aggregates["center_angular_error_deg"] == 0.0
        assert aggregates["peripheral_angular_error_deg"] == pytest.approx(36.0)
        assert aggregates["n_center"] == 1

    def test_missing_region_is_reported_as_none(self):
        report = build_report([sample_at(0.1, 0.1), sample_at(0.9, 0.9)], [[0.1, 0.1], [0.8, 0.9]], [0.5, 0.6], 512, 256)
        assert report.aggregates()["center_angular_error_deg"] is None

    def test_center_guess_on_uniform_targets(self):
        rng = np.random.default_rng(99)
        points = rng.uniform(size=(100_000, 2))
        samples = [sample_at(x, y) for x, y in points]
        report = build_report(samples, np.full((len(samples), 2), 0.5), np.ones(len(samples)), 512, 256)
        disc_fraction = math.pi * 10.0**2 / (512 * 256)
        assert report.accuracy_at(10) == pytest.approx(disc_fraction, abs=6e-4)

    def test_empty_set(self):
        with pytest.raises(DataError):
            build_report([], np.zeros((0, 2)), np.zeros(0), 512, 256)

    def test_confidence_correlation(self, samples):
        rng = np.random.default_rng(0)
        pred = targets(samples) + rng.normal(0.0, 0.05, size=(len(samples), 2))
        pred = np.clip(pred, 0.0, 1.0)
        dx, dy = (pred - targets(samples)).T
        px = np.hypot(dx * 512, dy * 256)
        report = build_report(samples, pred, 1.0 - px / px.max(), 512, 256)
        assert report.confidence_correlation == pytest.approx(1.0)

    def test_evaluate_uses_model_resolution(self, desk, tiny_dataset, samples):
        report = evaluate(build_model("center_fixed", desk.model), samples, tiny_dataset.scenes)
        assert (report.image_w, report.image_h) == (128, 64)
        assert report.kind == "center_fixed"
        assert len(report) == len(samples) == 20
        assert report.mean_confidence == 1.0


def report_with_accuracy_split(samples, conf_near, conf_far):
    """First half of the samples predicted within tau, the rest 0.2 away on both axes."""
    gt = targets(samples)
    half = len(samples) // 2
    pred = gt.copy()
    pred[:half] += 0.01
    pred[half:] += 0.2 * np.sign(0.5 - gt[half:])
    conf = np.where(np.arange(len(samples)) < half, conf_near, conf_far)
    return build_report(samples, np.clip(pred, 0.0, 1.0), conf, 512, 256)


class TestCalibration:
    def test_confident_accurate_samples(self, samples):
        report = report_with_accuracy_split(samples, 0.9, 0.3)
        assert report.calibration_sign_test(0.05) == pytest.approx(0.5 ** (len(samples) // 2))

    def test_inverted_confidence_is_not_significant(self, samples):
        assert report_with_accuracy_split(samples, 0.3, 0.9).calibration_sign_test(0.05) == pytest.approx(1.0)

    def test_needs_both_sides_of_tau(self, samples):
        report = build_report(samples, targets(samples), np.full(len(samples), 0.8), 512, 256)
        with pytest.raises(StatisticsError, match="both sides"):
            report.calibration_sign_test(0.05)


class TestHeatmap:
    def test_single_cell_is_overall_mean(self, samples):
        report = noisy_report(samples, 1)
        grid = spatial_heatmap(report, 1, 1)
        assert grid[0, 0] == pytest.approx(report.mean_angular_error, abs=1e-9)

    def test_perfect_predictor_gives_zero_cells(self, samples):
        report = build_report(samples, targets(samples), np.ones(len(samples)), 512, 256)
        grid = spatial_heatmap(report, 4, 8)
        assert np.all(grid[~np.isnan(grid)] == 0.0)

    def test_weighted_cell_means_recover_overall_mean(self, samples):
        report = noisy_report(samples, 2)
        grid = spatial_heatmap(report, 3, 5)
        counts = np.zeros((3, 5))
        for r in report.rows:
            counts[min(int(r.gt_y * 3), 2), min(int(r.gt_x * 5), 4)] += 1
        filled = counts > 0
        assert np.all(np.isnan(grid[~filled]))
        weighted = float((grid[filled] * counts[filled]).sum() / counts.sum())
        assert weighted == pytest.approx(report.mean_angular_error, abs=1e-9)

    def test_csv_marks_empty_cells(self):
        text = format_heatmap_csv(np.array([[1.5, np.nan], [np.nan, 0.25]]))
        assert text == "1.500000,\n,0.250000\n"

    def test_ppm_layout(self):
        data = heatmap_ppm(np.array([[0.0, 1.0], [np.nan, 0.5]]), cell_px=4)
        header = b"P6\n8 8\n255\n"
        assert data.startswith(header)
        pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(8, 8, 3)
        assert pixels[0, 0].tolist() == [0, 0, 255]
        assert pixels[0, 4].tolist() == [255, 0, 0]
        assert pixels[4, 0].tolist() == [128, 128, 128]
        assert pixels[4, 4].tolist() == [0, 255, 0]

    def test_invalid_grid(self, samples):
        with pytest.raises(ConfigError):
            spatial_heatmap(noisy_report(samples, 0), 0, 3)


class TestReportFiles:
    def test_aggregates_recompute_from_per_sample_csv(self, tmp_path, samples):
        report = noisy_report(samples, 3, kind="full")
        write_report(report, tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "heatmap.csv", "heatmap.ppm", "per_sample.csv", "report.json"
        ]
        written = json.loads((tmp_path / "report.json").read_text())
        reread = read_per_sample_csv(tmp_path / "per_sample.csv", 512, 256).aggregates()
        for key, value in written.items():
            if key == "kind":
                continue
            if isinstance(value, list):
                np.testing.assert_allclose(value, reread[key], atol=1e-9)
            elif isinstance(value, float):
                assert reread[key] == pytest.approx(value, abs=1e-9), key
            else:
                assert reread[key] == value, key

    def test_reread_report_cannot_build_heatmaps(self, tmp_path, samples):
        write_report(noisy_report(samples, 3), tmp_path)
        with pytest.raises(DataError, match="ground-truth"):
            spatial_heatmap(read_per_sample_csv(tmp_path / "per_sample.csv", 512, 256), 2, 2)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "per_sample.csv"
        path.write_text("a,b\n")
        with pytest.raises(DataError, match="expected header"):
            read_per_sample_csv(path, 512, 256)

    def test_binary_file_is_a_data_error(self, tmp_path):
        path = tmp_path / "per_sample.csv"
        path.write_bytes(b"\x89PNG\r\n\x1a\n\x00\xff")
        with pytest.raises(DataError, match="per_sample.csv: not a UTF-8 text file"):
            read_per_sample_csv(path, 512, 256)


class TestComparison:
    def test_clearly_better_model_is_significant(self, tmp_path, samples):
        close = noisy_report(samples, 4, scale=0.01, kind="full")
        far = noisy_report(samples, 5, scale=0.2, kind="temporal_only")
        comparison = compare_reports(close, far)
        assert comparison.corrected_alpha == pytest.approx(0.025)
        angular = comparison.metrics[0]
        assert angular.metric == "angular_error_deg"
        assert angular.t_stat < 0 and angular.cohens_d < 0
        assert angular.p_value < 0.001 and angular.significant
        path = write_comparison(comparison, tmp_path)
        saved = json.loads(path.read_text())
        assert saved["kind_a"] == "full" and saved["kind_b"] == "temporal_only"
        assert set(saved["metrics"]) == {"angular_error_deg", "squared_error"}

    def test_identical_reports_have_no_test(self, samples):
        report = noisy_report(samples, 6)
        with pytest.raises(StatisticsError):
            compare_reports(report, report)

    def test_unpaired_reports(self, samples):
        with pytest.raises(DataError, match="same samples"):
            compare_reports(noisy_report(samples, 1), noisy_report(samples[:-1], 1))


def test_ablation_table(tmp_path, desk, tiny_dataset):
    cfg = replace(desk, train=replace(desk.train, epochs=1))
    table = ablation(tiny_dataset, cfg)
    kinds = [r.kind for r in table.rows]
    assert kinds == ["full", "temporal_only", "spatial_only", "concat_fusion", "center_fixed"]
    assert table.n_test_samples == 4
    assert table.rows[0].p_value is None
    assert table.corrected_alpha <= 0.05
    assert len(table.format_lines()) == 5
    saved = json.loads(write_ablation(table, tmp_path).read_text())
    assert [r["kind"] for r in saved["rows"]] == kinds


def desk_run(epochs, split):
    return replace(DESK, train=replace(DESK.train, epochs=epochs, split=split))


@pytest.fixture(scope="module")
def blob_ablation():
    """Full vs temporal-only vs centre on 100 three-blob scenes, trained on one split."""
    dataset = generate_dataset(100, seed=2024, w=128, h=64, n_blobs=3, length=30)
    cfg = desk_run(epochs=20, split=(0.6, 0.15, 0.25))
    return cfg, ablation(dataset, cfg, kinds=("full", "temporal_only", "center_fixed"))


@pytest.mark.slow
class TestBlobSceneAblation:
    def test_scene_features_help(self, blob_ablation):
        _, table = blob_ablation
        full = table.reports["full"].column("ang_deg")
        temporal = table.reports["temporal_only"].column("ang_deg")
        assert full.mean() <= temporal.mean()
        result = paired_t_test(temporal, full)
        assert result.mean_diff > 0.0
        assert result.p_value < 0.05

    def test_center_guess_is_worst(self, blob_ablation):
        _, table = blob_ablation
        errors = {row.kind: row.mean_angular_error for row in table.rows}
        assert errors["center_fixed"] > max(errors["full"], errors["temporal_only"])

    def test_confidence_tracks_accuracy(self, blob_ablation):
        cfg, table = blob_ablation
        assert table.reports["full"].calibration_sign_test(cfg.loss.tau) < 0.05


@pytest.mark.slow
def test_momentum_scanpaths_favour_the_window():
    dataset = generate_dataset(40, seed=9, w=128, h=64, length=30, momentum=True)
    cfg = desk_run(epochs=10, split=(0.8, 0.0, 0.2))
    table = ablation(dataset, cfg, kinds=("temporal_only", "spatial_only"))
    errors = {row.kind: row.mean_angular_error for row in table.rows}
    assert errors["spatial_only"] >= errors["temporal_only"]
