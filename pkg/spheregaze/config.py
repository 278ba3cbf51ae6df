"""
Configuration for models, losses and training runs.

Configs are plain dataclasses. Files are parsed with ``yaml.safe_load`` so both
YAML and JSON documents are accepted.
"""

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VitConfig:
    """Spherical vision transformer hyperparameters."""

    image_h: int = 256
    image_w: int = 512
    patch_px: int = 16
    embed_dim: int = 384
    layers: int = 6
    heads: int = 8
    ffn_dim: int = 1536
    dropout_p: float = 0.1
    sh_lmax: int = 4
    azimuth_full: bool = False

    def __post_init__(self) -> None:
        if self.embed_dim % self.heads:
            raise ConfigError(
                f"vit.embed_dim={self.embed_dim} is not divisible by vit.heads={self.heads}"
            )
        if self.image_h % self.patch_px or self.image_w % self.patch_px:
            raise ConfigError(
                f"image {self.image_h}x{self.image_w} is not divisible by patch_px={self.patch_px}"
            )
        if self.image_w != 2 * self.image_h:
            raise ConfigError(f"equirectangular image must be 2:1, got {self.image_h}x{self.image_w}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"vit.dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.sh_lmax < 0 or self.layers < 0:
            raise ConfigError("vit.sh_lmax and vit.layers must be non-negative")

    @property
    def rows(self) -> int:
        return self.image_h // self.patch_px

    @property
    def cols(self) -> int:
        return self.image_w // self.patch_px

    @property
    def n_tokens(self) -> int:
        return self.rows * self.cols

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_px * self.patch_px

    @property
    def sh_dim(self) -> int:
        return (self.sh_lmax + 1) ** 2


@dataclass(frozen=True)
class TemporalConfig:
    """LSTM temporal encoder sizes."""

    hidden: int = 128
    input_dim: int = 4
    window: int = 10

    def __post_init__(self) -> None:
        if self.hidden < 1 or self.window < 1:
            raise ConfigError("temporal.hidden and temporal.window must be positive")
        if self.input_dim != 4:
            raise ConfigError("temporal.input_dim is fixed at 4 (x, y, confidence, log dt)")


@dataclass(frozen=True)
class FusionConfig:
    """Fusion network and prediction head sizes.

    With ``zero_scene_init`` the scene projections of models that also read
    the gaze window start at zero, so training begins from the window path.
    """

    fused_dim: int = 256
    head_hidden: int = 128
    zero_scene_init: bool = True

    def __post_init__(self) -> None:
        if self.fused_dim < 1 or self.head_hidden < 1:
            raise ConfigError("fusion.fused_dim and fusion.head_hidden must be positive")


@dataclass(frozen=True)
class LossConfig:
    """Weights of the combined loss and the confidence accuracy threshold."""

    lambda_gaze: float = 1.0
    lambda_conf: float = 0.1
    tau: float = 0.05

    def __post_init__(self) -> None:
        if self.lambda_gaze < 0 or self.lambda_conf < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.tau <= 0:
            raise ConfigError(f"loss.tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    progress: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("train.seed must fit in an unsigned 64-bit integer")
        split = tuple(float(s) for s in self.split)
        if len(split) != 3 or any(s < 0 for s in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigError(f"train.split must be three non-negative fractions summing to 1, got {self.split}")
        object.__setattr__(self, "split", split)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of all three subnetworks."""

    vit: VitConfig = field(default_factory=VitConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)


@dataclass(frozen=True)
class RunConfig:
    """Everything a training or evaluation run needs."""

    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["train"]["split"] = list(data["train"]["split"])
        return data


LARGE = RunConfig()

DESK = RunConfig(
    model=ModelConfig(
        vit=VitConfig(image_h=64, image_w=128, patch_px=16, embed_dim=32, layers=2,
                      heads=4, ffn_dim=128),
        temporal=TemporalConfig(hidden=16),
        fusion=FusionConfig(fused_dim=32, head_hidden=16),
    ),
    train=TrainConfig(lr=1e-3, batch_size=4, epochs=50),
)

PRESETS: Dict[str, RunConfig] = {"large": LARGE, "desk": DESK}

_SECTIONS = {
    "vit": VitConfig,
    "temporal": TemporalConfig,
    "fusion": FusionConfig,
    "loss": LossConfig,
    "train": TrainConfig,
}


def _merge_section(current: Any, values: Mapping[str, Any], section: str) -> Any:
    known = {f.name for f in fields(current)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    if "split" in values:
        values = dict(values, split=tuple(values["split"]))
    try:
        return replace(current, **values)
    except TypeError as exc:
        raise ConfigError(f"invalid value in '{section}': {exc}") from exc


def apply_overrides(base: RunConfig, data: Mapping[str, Any]) -> RunConfig:
    """Overlay a nested mapping of section -> values onto ``base``."""
    unknown = sorted(set(data) - set(_SECTIONS) - {"preset"})
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    model = base.model
    vit = _merge_section(model.vit, data.get("vit", {}), "vit")
    temporal = _merge_section(model.temporal, data.get("temporal", {}), "temporal")
    fusion = _merge_section(model.fusion, data.get("fusion", {}), "fusion")
    return RunConfig(
        model=ModelConfig(vit=vit, temporal=temporal, fusion=fusion),
        loss=_merge_section(base.loss, data.get("loss", {}), "loss"),
        train=_merge_section(base.train, data.get("train", {}), "train"),
    )


def config_from_dict(data: Mapping[str, Any], preset: str = "desk") -> RunConfig:
    """Build a config from a mapping, starting from its ``preset`` key (or ``preset``)."""
    name = data.get("preset", preset)
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})")
    return apply_overrides(PRESETS[name], data)


def load_config(
    path: Optional[Union[str, Path]] = None,
    preset: str = "desk",
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Load a config file (YAML or JSON) and apply flag overrides on top."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path) as f:
                loaded = yaml.safe_load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        data = loaded
        logger.debug("Loaded config from %s", path)
    config = config_from_dict(data, preset=preset)
    if overrides:
        config = apply_overrides(config, overrides)
    return config
