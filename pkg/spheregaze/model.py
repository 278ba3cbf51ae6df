"""
Model assembly: the full spatial + temporal predictor and its ablations.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .data import GazePoint, Sample, SceneImage
from .errors import ConfigError, DataError
from .fusion import FusionParams, fuse, init_fusion_params, linear, predict_confidence, predict_gaze
from .seeding import make_rng
from .temporal import LstmParams, encode_sequence, init_lstm_params
from .tensor import Tensor, named_tensors
from .vit import VitParams, encode_scene, init_vit_params

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    FULL = "full"
    TEMPORAL_ONLY = "temporal_only"
    SPATIAL_ONLY = "spatial_only"
    CENTER_FIXED = "center_fixed"
    CONCAT_FUSION = "concat_fusion"

    @classmethod
    def parse(cls, name: Union[str, "BaselineKind"]) -> "BaselineKind":
        if isinstance(name, BaselineKind):
            return name
        aliases = {"temporal": "temporal_only", "spatial": "spatial_only",
                   "center": "center_fixed", "concat": "concat_fusion"}
        try:
            return cls(aliases.get(name, name))
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown model kind '{name}' (choose from {choices})") from None

    @property
    def uses_scene(self) -> bool:
        return self in (BaselineKind.FULL, BaselineKind.SPATIAL_ONLY, BaselineKind.CONCAT_FUSION)

    @property
    def uses_window(self) -> bool:
        return self in (BaselineKind.FULL, BaselineKind.TEMPORAL_ONLY, BaselineKind.CONCAT_FUSION)

    @property
    def trainable(self) -> bool:
        return self is not BaselineKind.CENTER_FIXED


_FUSION_PARTS = {
    BaselineKind.FULL: ("combined", "spatial", "temporal", "weights"),
    BaselineKind.TEMPORAL_ONLY: ("temporal",),
    BaselineKind.SPATIAL_ONLY: ("spatial",),
    BaselineKind.CONCAT_FUSION: ("combined",),
}


@dataclass
class ModelParams:
    """Learned weights of all subnetworks; absent parts are None."""

    vit: Optional[VitParams] = None
    lstm: Optional[LstmParams] = None
    fusion: Optional[FusionParams] = None

    def named(self) -> Dict[str, Tensor]:
        return named_tensors(self)

    def count(self) -> int:
        return sum(t.size for t in self.named().values())


class Prediction(NamedTuple):
    gaze: Tensor  # [2]
    confidence: Tensor  # [1]

    def as_tuple(self) -> Tuple[float, float, float]:
        x, y = self.gaze.data
        return float(x), float(y), float(self.confidence.data[0])


def init_params(kind: BaselineKind, cfg: ModelConfig, seed: int) -> ModelParams:
    kind = BaselineKind.parse(kind)
    if not kind.trainable:
        return ModelParams()
    params = ModelParams()
    if kind.uses_scene:
        params.vit = init_vit_params(cfg.vit, make_rng(seed, "init.vit"))
    if kind.uses_window:
        params.lstm = init_lstm_params(cfg.temporal, make_rng(seed, "init.lstm"))
    params.fusion = init_fusion_params(
        cfg.fusion,
        cfg.vit.embed_dim,
        cfg.temporal.hidden,
        make_rng(seed, "init.fusion"),
        parts=_FUSION_PARTS[kind],
    )
    logger.debug("Initialised %s model with %d parameters", kind.value, params.count())
    return params


class GazeModel:
    """Parameters plus the forward pass selected by ``kind``."""

    def __init__(self, kind: BaselineKind, config: ModelConfig, params: ModelParams):
        self.kind = BaselineKind.parse(kind)
        self.config = config
        self.params = params

    def spatial_features(
        self, image: SceneImage, train_mode: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Optional[Tensor]:
        if not self.kind.uses_scene:
            return None
        return encode_scene(image, self.params.vit, self.config.vit, train_mode, rng)

    def temporal_features(self, window: Sequence[GazePoint]) -> Optional[Tensor]:
        if not self.kind.uses_window:
            return None
        return encode_sequence(window, self.params.lstm, self.config.temporal.window)

    def fused_features(self, f_spatial: Optional[Tensor], f_temporal: Optional[Tensor]) -> Tensor:
        fp = self.params.fusion
        if self.kind is BaselineKind.FULL:
            return fuse(f_spatial, f_temporal, fp)
        if self.kind is BaselineKind.TEMPORAL_ONLY:
            return linear(f_temporal, fp.temp_w, fp.temp_b)
        if self.kind is BaselineKind.SPATIAL_ONLY:
            return linear(f_spatial, fp.spat_w, fp.spat_b)
        return linear(T.concat([f_spatial, f_temporal]), fp.comb_w, fp.comb_b)

    def head(self, f_spatial: Optional[Tensor], f_temporal: Optional[Tensor]) -> Prediction:
        if not self.kind.trainable:
            return Prediction(Tensor([0.5, 0.5]), Tensor([1.0]))
        fused = self.fused_features(f_spatial, f_temporal)
        return Prediction(predict_gaze(fused, self.params.fusion), predict_confidence(fused, self.params.fusion))

    def forward(
        self,
        image: SceneImage,
        window: Sequence[GazePoint],
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Prediction:
        return self.head(self.spatial_features(image, train_mode, rng), self.temporal_features(window))


def build_model(kind: Union[str, BaselineKind], cfg: ModelConfig, seed: int = 0) -> GazeModel:
    """Freshly initialised model of the given kind."""
    kind = BaselineKind.parse(kind)
    return GazeModel(kind, cfg, init_params(kind, cfg, seed))


def model_forward(
    image: SceneImage,
    window: Sequence[GazePoint],
    model: GazeModel,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Prediction:
    """Scene + gaze window -> (gaze, confidence)."""
    return model.forward(image, window, train_mode, rng)


def forward_batch(
    model: GazeModel,
    samples: Sequence[Sample],
    scenes: Mapping[str, SceneImage],
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Predictions for a batch: gaze [N x 2] and confidence [N].

    The scene encoder runs once per distinct scene in the batch.
    """
    spatial: Dict[str, Optional[Tensor]] = {}
    gazes, confs = [], []
    for sample in samples:
        if sample.scene_id not in spatial:
            if model.kind.uses_scene and sample.scene_id not in scenes:
                raise DataError(f"no scene image for scene '{sample.scene_id}'")
            spatial[sample.scene_id] = model.spatial_features(scenes.get(sample.scene_id), train_mode, rng)
        pred = model.head(spatial[sample.scene_id], model.temporal_features(sample.window))
        gazes.append(pred.gaze)
        confs.append(pred.confidence)
    return T.stack(gazes), T.concat(confs)


def targets(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([[s.target.x, s.target.y] for s in samples], dtype=np.float64)
