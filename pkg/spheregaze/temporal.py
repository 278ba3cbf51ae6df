"""
LSTM temporal encoder over a window of gaze points, summarised by attention
against the final hidden state.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .config import TemporalConfig
from .data import GazePoint, check_increasing
from .errors import DataError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class LstmParams:
    w_f: Tensor
    w_i: Tensor
    w_c: Tensor
    w_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor
    w_a: Tensor

    @property
    def hidden(self) -> int:
        return self.w_f.shape[1]


def init_lstm_params(cfg: TemporalConfig, rng: np.random.Generator, prefix: str = "lstm") -> LstmParams:
    """Xavier-uniform weights; forget bias 1, other biases 0."""
    fan_in = cfg.hidden + cfg.input_dim
    h = cfg.hidden
    return LstmParams(
        w_f=T.xavier_uniform(rng, fan_in, h, f"{prefix}.w_f"),
        w_i=T.xavier_uniform(rng, fan_in, h, f"{prefix}.w_i"),
        w_c=T.xavier_uniform(rng, fan_in, h, f"{prefix}.w_c"),
        w_o=T.xavier_uniform(rng, fan_in, h, f"{prefix}.w_o"),
        b_f=T.ones((h,), f"{prefix}.b_f"),
        b_i=T.zeros((h,), f"{prefix}.b_i"),
        b_c=T.zeros((h,), f"{prefix}.b_c"),
        b_o=T.zeros((h,), f"{prefix}.b_o"),
        w_a=T.xavier_uniform(rng, h, h, f"{prefix}.w_a"),
    )


def prepare_sequence(points: Sequence[GazePoint], length: int = 10) -> Tensor:
    """Rows [x, y, confidence, ln(1 + dt_ms)], dt of the first row being 0."""
    if len(points) != length:
        raise DataError(f"gaze window must contain exactly {length} points, got {len(points)}")
    check_increasing(points, "gaze window")
    rows = []
    prev_t = points[0].t_ms
    for p in points:
        rows.append([p.x, p.y, p.confidence, math.log1p(p.t_ms - prev_t)])
        prev_t = p.t_ms
    return Tensor(np.array(rows))


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams) -> Tuple[Tensor, Tensor]:
    """One LSTM update on [h_{t-1}, x_t]."""
    hidden = params.hidden
    if h_prev.shape != (hidden,) or c_prev.shape != (hidden,):
        raise ShapeError("lstm_step", h_prev.shape, c_prev.shape, (hidden,))
    if x_t.ndim != 1 or x_t.shape[0] + hidden != params.w_f.shape[0]:
        raise ShapeError("lstm_step", x_t.shape, params.w_f.shape, detail="input width")
    z = T.reshape(T.concat([h_prev, x_t]), (1, -1))

    def gate(w: Tensor, b: Tensor) -> Tensor:
        return T.reshape(z @ w, (hidden,)) + b

    f_t = T.sigmoid(gate(params.w_f, params.b_f))
    i_t = T.sigmoid(gate(params.w_i, params.b_i))
    c_tilde = T.tanh(gate(params.w_c, params.b_c))
    c_t = f_t * c_prev + i_t * c_tilde
    o_t = T.sigmoid(gate(params.w_o, params.b_o))
    h_t = o_t * T.tanh(c_t)
    return h_t, c_t


def temporal_attention(
    h_all: Tensor, params: LstmParams, record: Optional[List[np.ndarray]] = None
) -> Tensor:
    """Softmax over t of h_t^T W_a h_final; returns the weighted sum of h_t."""
    steps, hidden = h_all.shape
    if steps < 1:
        raise ShapeError("temporal_attention", h_all.shape, detail="need at least one step")
    h_final = T.reshape(h_all[steps - 1], (hidden, 1))
    scores = T.reshape(h_all @ (params.w_a @ h_final), (1, steps))
    alpha = T.softmax(scores)
    if record is not None:
        record.append(alpha.numpy().reshape(-1))
    return T.reshape(alpha @ h_all, (hidden,))


def encode_sequence(
    points: Sequence[GazePoint],
    params: LstmParams,
    window: int = 10,
    record: Optional[List[np.ndarray]] = None,
) -> Tensor:
    """Gaze window -> f_temporal of length hidden."""
    features = prepare_sequence(points, window)
    hidden = params.hidden
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    states = []
    for t in range(window):
        h, c = lstm_step(features[t], h, c, params)
        states.append(h)
    return temporal_attention(T.stack(states), params, record)
