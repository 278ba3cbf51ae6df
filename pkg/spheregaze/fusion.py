"""
Adaptive fusion of spatial and temporal features, the two prediction heads,
and the combined training loss.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from . import tensor as T
from .config import FusionConfig, LossConfig
from .errors import ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class FusionParams:
    """Fusion projections and head weights.

    The projection groups are optional so ablation models can omit the
    machinery they do not use.
    """

    gaze_w1: Tensor
    gaze_b1: Tensor
    gaze_w2: Tensor
    gaze_b2: Tensor
    conf_w1: Tensor
    conf_b1: Tensor
    conf_w2: Tensor
    conf_b2: Tensor
    comb_w: Optional[Tensor] = None
    comb_b: Optional[Tensor] = None
    spat_w: Optional[Tensor] = None
    spat_b: Optional[Tensor] = None
    temp_w: Optional[Tensor] = None
    temp_b: Optional[Tensor] = None
    ws_w: Optional[Tensor] = None
    ws_b: Optional[Tensor] = None


def init_fusion_params(
    cfg: FusionConfig,
    spatial_dim: int,
    temporal_dim: int,
    rng: np.random.Generator,
    parts: Tuple[str, ...] = ("combined", "spatial", "temporal", "weights"),
    prefix: str = "fusion",
) -> FusionParams:
    """Initialise heads plus the requested projection groups."""
    fd, hh = cfg.fused_dim, cfg.head_hidden
    combined = spatial_dim + temporal_dim
    params = FusionParams(
        gaze_w1=T.xavier_uniform(rng, fd, hh, f"{prefix}.gaze_w1"),
        gaze_b1=T.zeros((hh,), f"{prefix}.gaze_b1"),
        gaze_w2=T.xavier_uniform(rng, hh, 2, f"{prefix}.gaze_w2"),
        gaze_b2=T.zeros((2,), f"{prefix}.gaze_b2"),
        conf_w1=T.xavier_uniform(rng, fd, hh, f"{prefix}.conf_w1"),
        conf_b1=T.zeros((hh,), f"{prefix}.conf_b1"),
        conf_w2=T.xavier_uniform(rng, hh, 1, f"{prefix}.conf_w2"),
        conf_b2=T.zeros((1,), f"{prefix}.conf_b2"),
    )
    if "combined" in parts:
        params.comb_w = T.xavier_uniform(rng, combined, fd, f"{prefix}.comb_w")
        params.comb_b = T.zeros((fd,), f"{prefix}.comb_b")
    if "spatial" in parts:
        params.spat_w = T.xavier_uniform(rng, spatial_dim, fd, f"{prefix}.spat_w")
        params.spat_b = T.zeros((fd,), f"{prefix}.spat_b")
    if "temporal" in parts:
        params.temp_w = T.xavier_uniform(rng, temporal_dim, fd, f"{prefix}.temp_w")
        params.temp_b = T.zeros((fd,), f"{prefix}.temp_b")
    if "weights" in parts:
        params.ws_w = T.xavier_uniform(rng, combined, 1, f"{prefix}.ws_w")
        params.ws_b = T.zeros((1,), f"{prefix}.ws_b")
    if cfg.zero_scene_init and ("temporal" in parts or "combined" in parts):
        # draws above are unchanged; only the scene rows are cleared
        if params.spat_w is not None:
            params.spat_w.data[:] = 0.0
        if params.comb_w is not None:
            params.comb_w.data[:spatial_dim] = 0.0
    return params


def linear(v: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-vector affine map: v @ w + b for a rank-1 ``v``."""
    if v.ndim != 1 or v.shape[0] != w.shape[0]:
        raise ShapeError("linear", v.shape, w.shape)
    return T.reshape(T.reshape(v, (1, -1)) @ w, (w.shape[1],)) + b


class Fused(NamedTuple):
    features: Tensor
    w_s: Tensor
    w_t: Tensor


def fuse_with_weights(f_spatial: Tensor, f_temporal: Tensor, params: FusionParams) -> Fused:
    """Adaptive fusion, also returning the scalar modality weights."""
    if params.ws_w is None or params.spat_w is None or params.temp_w is None or params.comb_w is None:
        raise ShapeError("fuse", (), detail="fusion parameters lack the adaptive-weight groups")
    f_combined = T.concat([f_spatial, f_temporal])
    if f_combined.shape[0] != params.comb_w.shape[0]:
        raise ShapeError("fuse", f_spatial.shape, f_temporal.shape, params.comb_w.shape)
    w_s = T.sigmoid(linear(f_combined, params.ws_w, params.ws_b))
    w_t = 1.0 - w_s
    fused = (
        w_s * linear(f_spatial, params.spat_w, params.spat_b)
        + w_t * linear(f_temporal, params.temp_w, params.temp_b)
        + linear(f_combined, params.comb_w, params.comb_b)
    )
    return Fused(fused, w_s, w_t)


def fuse(f_spatial: Tensor, f_temporal: Tensor, params: FusionParams) -> Tensor:
    return fuse_with_weights(f_spatial, f_temporal, params).features


def predict_gaze(f_fused: Tensor, params: FusionParams) -> Tensor:
    """Two sigmoid outputs (x, y) in (0, 1)."""
    hidden = T.relu(linear(f_fused, params.gaze_w1, params.gaze_b1))
    return T.sigmoid(linear(hidden, params.gaze_w2, params.gaze_b2))


def predict_confidence(f_fused: Tensor, params: FusionParams) -> Tensor:
    """One sigmoid output in (0, 1), shape [1]."""
    hidden = T.relu(linear(f_fused, params.conf_w1, params.conf_b1))
    return T.sigmoid(linear(hidden, params.conf_w2, params.conf_b2))


# losses

Batch = Union[Tensor, np.ndarray]


def _batch_pair(pred: Batch, gt: Batch, op: str) -> Tuple[Tensor, Tensor]:
    pred, gt = T.as_tensor(pred), T.as_tensor(gt)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeError(op, pred.shape, gt.shape, detail="expected matching [N x 2] batches")
    if pred.shape[0] == 0:
        raise ShapeError(op, pred.shape, detail="empty batch")
    return pred, gt


def gaze_loss(pred: Batch, gt: Batch) -> Tensor:
    """Mean over the batch of the squared Euclidean error."""
    pred, gt = _batch_pair(pred, gt, "gaze_loss")
    diff = pred - gt
    return T.sum(diff * diff) / pred.shape[0]


def accuracy_indicator(pred: Batch, gt: Batch, tau: float) -> np.ndarray:
    """1.0 where the Euclidean prediction error is below ``tau``; a constant."""
    p = pred.data if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)
    g = gt.data if isinstance(gt, Tensor) else np.asarray(gt, dtype=np.float64)
    return (np.linalg.norm(p - g, axis=1) < tau).astype(np.float64)


def confidence_loss(conf: Batch, pred: Batch, gt: Batch, cfg: LossConfig) -> Tensor:
    """Mean of (c - 1[||pred - gt|| < tau])^2 with the indicator held constant."""
    pred, gt = _batch_pair(pred, gt, "confidence_loss")
    conf = T.as_tensor(conf)
    if conf.shape != (pred.shape[0],):
        raise ShapeError("confidence_loss", conf.shape, pred.shape)
    diff = conf - accuracy_indicator(pred, gt, cfg.tau)
    return T.sum(diff * diff) / pred.shape[0]


class LossTerms(NamedTuple):
    total: Tensor
    gaze: Tensor
    confidence: Tensor


def loss_terms(pred: Batch, gt: Batch, conf: Batch, cfg: LossConfig) -> LossTerms:
    l_gaze = gaze_loss(pred, gt)
    l_conf = confidence_loss(conf, pred, gt, cfg)
    return LossTerms(cfg.lambda_gaze * l_gaze + cfg.lambda_conf * l_conf, l_gaze, l_conf)


def total_loss(pred: Batch, gt: Batch, conf: Batch, cfg: LossConfig) -> Tensor:
    """lambda_gaze * L_gaze + lambda_conf * L_conf."""
    return loss_terms(pred, gt, conf, cfg).total
