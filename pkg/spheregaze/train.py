"""
Adam optimiser and the minibatch training loop.
"""

import logging
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .config import LossConfig, RunConfig, TrainConfig
from .data import Dataset, Sample, SceneImage, split_by_scene
from .errors import DataError, NumericError, ShapeError
from .fusion import loss_terms
from .model import BaselineKind, GazeModel, build_model, forward_batch, targets
from .seeding import make_rng
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: TrainConfig,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.step += 1
    bc1 = 1.0 - hyper.beta1**state.step
    bc2 = 1.0 - hyper.beta2**state.step
    for name, param in params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ShapeError("adam_step", param.shape, g.shape, detail=name)
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        m = state.m[name]
        v = state.v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * (g * g)
        param.data -= hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return state


@dataclass
class EpochRecord:
    epoch: int
    train_total: float
    train_gaze: float
    train_conf: float
    val_total: Optional[float] = None
    val_gaze: Optional[float] = None
    val_conf: Optional[float] = None


@dataclass
class TrainResult:
    model: GazeModel
    history: List[EpochRecord]
    split: Tuple[List[str], List[str], List[str]]
    best_epoch: Optional[int] = None


def dataset_loss(
    model: GazeModel,
    samples: Sequence[Sample],
    scenes: Mapping[str, SceneImage],
    loss_cfg: LossConfig,
    batch_size: int = 64,
) -> Tuple[float, float, float]:
    """Eval-mode (total, gaze, confidence) losses averaged over ``samples``."""
    if not samples:
        raise DataError("cannot compute a loss over zero samples")
    sums = np.zeros(3)
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        gaze, conf = forward_batch(model, batch, scenes)
        terms = loss_terms(gaze, targets(batch), conf, loss_cfg)
        sums += len(batch) * np.array([t.item() for t in terms])
    total, l_gaze, l_conf = sums / len(samples)
    return float(total), float(l_gaze), float(l_conf)


def _snapshot(model: GazeModel) -> Dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.params.named().items()}


def _restore(model: GazeModel, snapshot: Mapping[str, np.ndarray]) -> None:
    for name, t in model.params.named().items():
        t.data[...] = snapshot[name]


def train_on_samples(
    model: GazeModel,
    train_samples: Sequence[Sample],
    scenes: Mapping[str, SceneImage],
    cfg: RunConfig,
    val_samples: Sequence[Sample] = (),
) -> Tuple[List[EpochRecord], Optional[int]]:
    """Run ``cfg.train.epochs`` epochs of shuffled minibatch Adam on ``model``.

    Keeps the parameters of the epoch with the lowest validation loss when a
    validation set is given.
    """
    hyper = cfg.train
    history: List[EpochRecord] = []
    if not model.kind.trainable or hyper.epochs == 0:
        return history, None
    if not train_samples:
        raise DataError("training split is empty")

    params = model.params.named()
    state = AdamState()
    best: Optional[Tuple[float, int, Dict[str, np.ndarray]]] = None
    global_step = 0
    for epoch in range(hyper.epochs):
        order = make_rng(hyper.seed, "shuffle", epoch).permutation(len(train_samples))
        batches = [order[s : s + hyper.batch_size] for s in range(0, len(order), hyper.batch_size)]
        sums = np.zeros(3)
        for step, idx in enumerate(
            tqdm(batches, desc=f"epoch {epoch + 1}", file=sys.stderr, disable=not hyper.progress, leave=False)
        ):
            batch = [train_samples[k] for k in idx]
            rng = make_rng(hyper.seed, "dropout", global_step)
            try:
                with Tape() as tape:
                    gaze, conf = forward_batch(model, batch, scenes, train_mode=True, rng=rng)
                    terms = loss_terms(gaze, targets(batch), conf, cfg.loss)
                grads = backward(tape, terms.total, params)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch + 1}, step {step + 1}: {exc}") from exc
            adam_step(params, grads, state, hyper)
            sums += len(batch) * np.array([t.item() for t in terms])
            global_step += 1

        means = sums / len(train_samples)
        record = EpochRecord(epoch + 1, *(float(v) for v in means))
        if val_samples:
            record.val_total, record.val_gaze, record.val_conf = dataset_loss(model, val_samples, scenes, cfg.loss)
            if best is None or record.val_total < best[0]:
                best = (record.val_total, epoch + 1, _snapshot(model))
        history.append(record)
        logger.info(
            "epoch %d/%d train L=%.5f (gaze %.5f, conf %.5f) val L=%s",
            epoch + 1, hyper.epochs, record.train_total, record.train_gaze, record.train_conf,
            "n/a" if record.val_total is None else f"{record.val_total:.5f}",
        )

    if best is not None:
        _restore(model, best[2])
        logger.info("Restored best validation epoch %d (L=%.5f)", best[1], best[0])
        return history, best[1]
    return history, None


def train(
    kind: Union[str, BaselineKind],
    dataset: Dataset,
    cfg: RunConfig,
    split: Optional[Tuple[List[str], List[str], List[str]]] = None,
) -> TrainResult:
    """Split ``dataset`` by scene, build a fresh model of ``kind`` and train it."""
    hyper = cfg.train
    if split is None:
        split = split_by_scene(list(dataset.scenes), hyper.split, hyper.seed)
    train_ids, val_ids, _ = split
    model = build_model(kind, cfg.model, hyper.seed)
    window = cfg.model.temporal.window
    train_samples = dataset.samples(train_ids, window)
    val_samples = dataset.samples(val_ids, window)
    if hyper.epochs > 0 and model.kind.trainable and not train_samples:
        raise DataError("training split is empty; add scenes or change train.split")
    logger.info(
        "Training %s on %d samples (%d val) for %d epochs",
        model.kind.value, len(train_samples), len(val_samples), hyper.epochs,
    )
    history, best_epoch = train_on_samples(model, train_samples, dataset.scenes, cfg, val_samples)
    return TrainResult(model=model, history=history, split=split, best_epoch=best_epoch)
