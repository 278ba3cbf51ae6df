"""
Spherical vision transformer: equirectangular scene -> spatial feature vector.

Patches are projected, rescaled by their latitude's area weight, offset by a
projected spherical-harmonic positional code, run through pre-norm attention
blocks and average-pooled.
"""

import functools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from . import tensor as T
from .config import VitConfig
from .data import SceneImage
from .errors import ShapeError
from .sphere import PatchGrid, grid_area_weights, grid_coords, real_sh_matrix
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class VitLayerParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    w1: Tensor
    w2: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor


@dataclass
class VitParams:
    patch_w: Tensor
    patch_b: Tensor
    pe_w: Tensor
    pe_b: Tensor
    layers: List[VitLayerParams]


def init_vit_params(cfg: VitConfig, rng: np.random.Generator, prefix: str = "vit") -> VitParams:
    """Xavier-uniform projections, zero biases, unit layer-norm gains."""
    d = cfg.embed_dim
    layers = []
    for n in range(cfg.layers):
        p = f"{prefix}.layers.{n}"
        layers.append(
            VitLayerParams(
                w_q=T.xavier_uniform(rng, d, d, f"{p}.w_q"),
                w_k=T.xavier_uniform(rng, d, d, f"{p}.w_k"),
                w_v=T.xavier_uniform(rng, d, d, f"{p}.w_v"),
                w_o=T.xavier_uniform(rng, d, d, f"{p}.w_o"),
                w1=T.xavier_uniform(rng, d, cfg.ffn_dim, f"{p}.w1"),
                w2=T.xavier_uniform(rng, cfg.ffn_dim, d, f"{p}.w2"),
                ln1_gamma=T.ones((d,), f"{p}.ln1_gamma"),
                ln1_beta=T.zeros((d,), f"{p}.ln1_beta"),
                ln2_gamma=T.ones((d,), f"{p}.ln2_gamma"),
                ln2_beta=T.zeros((d,), f"{p}.ln2_beta"),
            )
        )
    return VitParams(
        patch_w=T.xavier_uniform(rng, cfg.patch_dim, d, f"{prefix}.patch_w"),
        patch_b=T.zeros((d,), f"{prefix}.patch_b"),
        pe_w=T.xavier_uniform(rng, cfg.sh_dim, d, f"{prefix}.pe_w"),
        pe_b=T.zeros((d,), f"{prefix}.pe_b"),
        layers=layers,
    )


def patch_grid(cfg: VitConfig) -> PatchGrid:
    return PatchGrid(rows=cfg.rows, cols=cfg.cols, patch_px=cfg.patch_px)


@functools.lru_cache(maxsize=16)
def _token_weights(grid: PatchGrid) -> np.ndarray:
    return grid_area_weights(grid).reshape(-1, 1)


@functools.lru_cache(maxsize=16)
def _sh_table(grid: PatchGrid, l_max: int, azimuth_full: bool) -> np.ndarray:
    coords = grid_coords(grid, azimuth_full)
    return real_sh_matrix(coords[:, 0], coords[:, 1], l_max)


def extract_patches(image: Union[SceneImage, np.ndarray], cfg: VitConfig) -> Tensor:
    """Cut the image into row-major patches and flatten each (pixel-major, RGB innermost)."""
    pixels = image.pixels if isinstance(image, SceneImage) else np.asarray(image, dtype=np.float64)
    if pixels.shape != (cfg.image_h, cfg.image_w, 3):
        raise ShapeError(
            "extract_patches", pixels.shape, (cfg.image_h, cfg.image_w, 3),
            detail="image does not match the configured resolution",
        )
    p = cfg.patch_px
    tiles = pixels.reshape(cfg.rows, p, cfg.cols, p, 3).transpose(0, 2, 1, 3, 4)
    return Tensor(tiles.reshape(cfg.n_tokens, cfg.patch_dim))


def embed_patches(patches: Tensor, params: VitParams, grid: PatchGrid) -> Tensor:
    """Linear patch projection scaled by each token's mean-1 latitude weight."""
    weights = _token_weights(grid)
    if patches.shape[0] != weights.shape[0]:
        raise ShapeError("embed_patches", patches.shape, (grid.n_tokens, patches.shape[1]))
    return (patches @ params.patch_w + params.patch_b) * weights


def positional_encoding(grid: PatchGrid, params: VitParams, cfg: VitConfig) -> Tensor:
    basis = Tensor(_sh_table(grid, cfg.sh_lmax, cfg.azimuth_full))
    return basis @ params.pe_w + params.pe_b


def multi_head_attention(
    h: Tensor,
    layer: VitLayerParams,
    heads: int,
    record: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Scaled dot-product attention per head over all tokens, heads joined through W_O."""
    d = h.shape[1]
    dk = d // heads
    q = h @ layer.w_q
    k = h @ layer.w_k
    v = h @ layer.w_v
    scale = 1.0 / math.sqrt(dk)
    outputs = []
    for head in range(heads):
        cols = (slice(None), slice(head * dk, (head + 1) * dk))
        weights = T.softmax((q[cols] @ k[cols].T) * scale)
        if record is not None:
            record.append(weights.numpy())
        outputs.append(weights @ v[cols])
    return T.concat(outputs, axis=1) @ layer.w_o


def attention_layer(
    x: Tensor,
    layer: VitLayerParams,
    cfg: VitConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
    record: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Pre-norm block: x + Drop(MHA(LN x)), then x + Drop(FFN(LN x))."""
    attended = multi_head_attention(T.layer_norm(x, layer.ln1_gamma, layer.ln1_beta), layer, cfg.heads, record)
    x = x + T.dropout(attended, cfg.dropout_p, rng, train_mode)
    hidden = T.gelu(T.layer_norm(x, layer.ln2_gamma, layer.ln2_beta) @ layer.w1)
    return x + T.dropout(hidden @ layer.w2, cfg.dropout_p, rng, train_mode)


def encode_scene(
    image: Union[SceneImage, np.ndarray],
    params: VitParams,
    cfg: VitConfig,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
    record: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Scene image -> f_spatial of length embed_dim."""
    grid = patch_grid(cfg)
    patches = extract_patches(image, cfg)
    x = embed_patches(patches, params, grid) + positional_encoding(grid, params, cfg)
    for layer in params.layers:
        x = attention_layer(x, layer, cfg, train_mode, rng, record)
    return T.mean(x, axis=0)
