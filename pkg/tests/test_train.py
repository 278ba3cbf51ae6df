from dataclasses import replace

import numpy as np
import pytest

from spheregaze.config import TrainConfig
from spheregaze.errors import DataError, ShapeError
from spheregaze.model import build_model
from spheregaze.data import Dataset
from spheregaze.synth import generate_dataset, generate_scanpath, generate_scene
from spheregaze.tensor import Tensor
from spheregaze.train import AdamState, adam_step, dataset_loss, train, train_on_samples


def with_train(cfg, **values):
    return replace(cfg, train=replace(cfg.train, **values))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        w = Tensor([1.0, -2.0, 3.0], requires_grad=True)
        state = AdamState()
        for _ in range(3):
            adam_step({"w": w}, {"w": np.zeros(3)}, state, TrainConfig(lr=0.1))
        np.testing.assert_array_equal(w.data, [1.0, -2.0, 3.0])
        assert state.step == 3

    def test_first_step_moves_by_lr(self):
        w = Tensor([0.0, 0.0], requires_grad=True)
        adam_step({"w": w}, {"w": np.array([0.3, -7.0])}, AdamState(), TrainConfig(lr=1e-3))
        np.testing.assert_allclose(w.data, [-1e-3, 1e-3], rtol=1e-6)

    def test_identical_runs_match(self, rng):
        grads = [rng.normal(size=4) for _ in range(10)]
        finals = []
        for _ in range(2):
            w = Tensor(np.ones(4), requires_grad=True)
            state = AdamState()
            for g in grads:
                adam_step({"w": w}, {"w": g}, state, TrainConfig(lr=1e-2))
            finals.append(w.data.copy())
        assert np.array_equal(*finals)

    def test_gradient_shape_mismatch(self):
        w = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError, match="w"):
            adam_step({"w": w}, {"w": np.zeros(4)}, AdamState(), TrainConfig())


class TestTrain:
    def test_zero_epochs_returns_initial_model(self, desk, tiny_dataset):
        result = train("full", tiny_dataset, with_train(desk, epochs=0))
        assert result.history == []
        fresh = build_model("full", desk.model, desk.train.seed).params.named()
        trained = result.model.params.named()
        assert all(np.array_equal(fresh[k].data, trained[k].data) for k in fresh)

    def test_history_is_reproducible(self, desk_no_dropout, tiny_dataset):
        cfg = with_train(desk_no_dropout, epochs=2)
        a = train("full", tiny_dataset, cfg)
        b = train("full", tiny_dataset, cfg)
        assert len(a.history) == 2
        assert a.history == b.history
        assert a.split == b.split

    def test_dropout_streams_are_seeded(self, desk, tiny_dataset):
        cfg = with_train(desk, epochs=1)
        assert train("full", tiny_dataset, cfg).history == train("full", tiny_dataset, cfg).history

    def test_best_validation_epoch_is_restored(self, desk, tiny_dataset):
        ids = sorted(tiny_dataset.scenes)
        split = (ids[:3], ids[3:4], ids[4:])
        result = train("temporal_only", tiny_dataset, with_train(desk, epochs=3), split=split)
        assert all(r.val_total is not None for r in result.history)
        best = min(result.history, key=lambda r: r.val_total)
        assert result.best_epoch == best.epoch
        val_samples = tiny_dataset.samples(split[1])
        total, _, _ = dataset_loss(result.model, val_samples, tiny_dataset.scenes, desk.loss)
        assert total == pytest.approx(best.val_total, rel=1e-12)

    def test_center_fixed_needs_no_training(self, desk, tiny_dataset):
        result = train("center_fixed", tiny_dataset, with_train(desk, epochs=5))
        assert result.history == []

    def test_empty_training_split(self, desk, tiny_dataset):
        ids = sorted(tiny_dataset.scenes)
        with pytest.raises(DataError, match="training split is empty"):
            train("full", tiny_dataset, with_train(desk, epochs=1), split=([], ids[:1], ids[1:]))

    def test_loss_over_no_samples(self, desk, tiny_dataset):
        with pytest.raises(DataError):
            dataset_loss(build_model("full", desk.model), [], tiny_dataset.scenes, desk.loss)


def single_blob_dataset(centers, w=128, h=64, length=20):
    """One scene per centre, each holding a single blob the scanpath never leaves."""
    dataset = Dataset()
    for k, center in enumerate(centers):
        sid = f"scene_{k:03d}"
        image, blob = generate_scene(k, w, h, centers=[center])
        dataset.scenes[sid] = image
        dataset.records.append(generate_scanpath(blob, seed=11 + k, length=length, scene_id=sid))
    return dataset


@pytest.mark.slow
def test_overfits_a_tiny_set(desk):
    dataset = single_blob_dataset([(0.2, 0.3), (0.8, 0.7)])
    samples = dataset.samples()
    assert len(samples) == 20
    cfg = with_train(desk, epochs=200)
    model = build_model("full", cfg.model, cfg.train.seed)
    initial, _, _ = dataset_loss(model, samples, dataset.scenes, cfg.loss)
    history, _ = train_on_samples(model, samples, dataset.scenes, cfg)
    final, _, _ = dataset_loss(model, samples, dataset.scenes, cfg.loss)
    assert len(history) == 200
    # one prediction cannot sit near both blobs, so the untrained loss is large
    assert initial > 0.08
    assert final < 0.1 * initial
