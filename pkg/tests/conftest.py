"""
Shared fixtures: desk-scale config, seeded generators and a tiny synthetic dataset.
"""

from dataclasses import replace

import numpy as np
import pytest

from spheregaze.config import DESK, RunConfig
from spheregaze.data import GazePoint, save_dataset
from spheregaze.synth import generate_dataset


@pytest.fixture
def desk() -> RunConfig:
    return DESK


@pytest.fixture
def desk_no_dropout(desk) -> RunConfig:
    return replace(desk, model=replace(desk.model, vit=replace(desk.model.vit, dropout_p=0.0)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    """Five desk-resolution scenes with 14-point scanpaths (4 samples each)."""
    return generate_dataset(5, seed=3, w=128, h=64, n_blobs=3, length=14)


@pytest.fixture
def dataset_dir(tmp_path, tiny_dataset):
    root = tmp_path / "data"
    save_dataset(root, tiny_dataset)
    return root


def make_window(n: int = 10, spacing: float = 16.6, start: float = 0.0):
    return [
        GazePoint(t_ms=start + k * spacing, x=0.3 + 0.01 * k, y=0.4 + 0.005 * k, confidence=0.9)
        for k in range(n)
    ]


@pytest.fixture
def window():
    return make_window()
