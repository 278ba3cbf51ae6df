"""
End-to-end finite-difference check of the combined loss against the tape.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

from .config import DESK, RunConfig
from .fusion import loss_terms
from .model import BaselineKind, build_model, forward_batch, targets
from .seeding import make_rng
from .synth import generate_dataset
from .tensor import Tensor, grad_check

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: Dict[str, float] = field(default_factory=dict)
    coords_checked: int = 0

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error <= tolerance


def run_gradcheck(
    cfg: Optional[RunConfig] = None,
    kind: BaselineKind = BaselineKind.FULL,
    coords_per_param: int = 3,
    n_samples: int = 2,
    eps: float = 1e-5,
    seed: int = 0,
) -> GradCheckResult:
    """Check ``coords_per_param`` random coordinates of every parameter tensor.

    Dropout is disabled; the loss is the total loss over ``n_samples``
    synthetic samples drawn from one scene at the configured resolution.
    """
    cfg = cfg or DESK
    vit = replace(cfg.model.vit, dropout_p=0.0)
    model_cfg = replace(cfg.model, vit=vit)
    model = build_model(kind, model_cfg, seed)
    window = model_cfg.temporal.window
    dataset = generate_dataset(1, seed, w=vit.image_w, h=vit.image_h, length=window + n_samples)
    samples = dataset.samples(window=window)[:n_samples]
    gt = targets(samples)

    def loss(_: Tensor) -> Tensor:
        gaze, conf = forward_batch(model, samples, dataset.scenes)
        return loss_terms(gaze, gt, conf, cfg.loss).total

    result = GradCheckResult(0.0)
    rng = make_rng(seed, "gradcheck")
    for name, param in model.params.named().items():
        k = min(coords_per_param, param.size)
        coords = sorted(int(c) for c in rng.choice(param.size, size=k, replace=False))
        err = grad_check(loss, param, eps=eps, coords=coords)
        result.per_param[name] = err
        result.coords_checked += k
        result.max_rel_error = max(result.max_rel_error, err)
    worst = max(result.per_param, key=result.per_param.get) if result.per_param else "-"
    logger.info(
        "Gradient check over %d coordinates of %d tensors: max relative error %.3e (%s)",
        result.coords_checked, len(result.per_param), result.max_rel_error, worst,
    )
    return result
