"""
Dense float64 tensors with tape-based reverse-mode differentiation.

Primitives run eagerly on numpy arrays. While a ``Tape`` is active, every
primitive that touches a tensor with ``requires_grad`` appends a node holding
its inputs, its output and a closure computing input gradients. ``backward``
walks that list once, in reverse.
"""

import contextvars
import dataclasses
import logging
import math
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NonDeterminismError, NumericError, ShapeError, TapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]
GradFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715

_active_tape: "contextvars.ContextVar[Optional[Tape]]" = contextvars.ContextVar(
    "spheregaze_active_tape", default=None
)


class Tensor:
    """Row-major float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        if not np.isfinite(self.data).all():
            raise NumericError(f"tensor {name or ''} initialised with non-finite values".strip())

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = np.zeros_like(data) if requires_grad else None
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, detail="tensor is not a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by a python scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return take(self, index)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


@dataclasses.dataclass
class Node:
    """One recorded primitive application."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    grad_fn: GradFn


class Tape:
    """Ordered record of a single forward graph.

    Use as a context manager; primitives evaluated inside the ``with`` block
    are recorded. A tape supports exactly one ``backward`` call.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.consumed = False
        self._produced: set = set()
        self._leaves: Dict[int, Tensor] = {}
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise TapeError("tape already consumed by backward; record a new forward graph")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def push(self, node: Node) -> None:
        if self.consumed:
            raise TapeError("cannot record onto a consumed tape")
        for tensor in node.inputs:
            if tensor.requires_grad and id(tensor) not in self._produced:
                self._leaves.setdefault(id(tensor), tensor)
        self._produced.add(id(node.output))
        self.nodes.append(node)

    @property
    def leaves(self) -> List[Tensor]:
        return list(self._leaves.values())

    def __len__(self) -> int:
        return len(self.nodes)


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def as_tensor(value: Any) -> Tensor:
    """Wrap scalars and arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64), False)


def _check_finite(op: str, data: np.ndarray) -> None:
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor], grad_fn: GradFn) -> Tensor:
    _check_finite(op, data)
    tape = _active_tape.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, track)
    if track:
        tape.push(Node(op, tuple(inputs), out, grad_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise arithmetic


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _emit(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _emit(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _emit(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, detail="expected [m x k] @ [k x n]")
    return _emit(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


# shape manipulation


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="rank-2 tensor required")
    return _emit("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _emit("reshape", data.copy(), (a,), lambda g: (g.reshape(a.shape),))


def take(a: Tensor, index: Any) -> Tensor:
    """Basic or advanced numpy indexing with a scatter-add gradient."""

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit("take", np.array(a.data[index], dtype=np.float64), (a,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit("concat", data, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("stack", *[t.shape for t in tensors]) from None
    return _emit(
        "stack",
        data,
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )


# reductions


def sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), grad_fn)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# activations


def sigmoid(x: Tensor) -> Tensor:
    s = np.exp(-np.logaddexp(0.0, -x.data))
    return _emit("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _emit("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(np.float64)
    return _emit("relu", x.data * mask, (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    t = np.tanh(_GELU_K * (v + _GELU_C * v**3))
    out = 0.5 * v * (1.0 + t)

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        du = _GELU_K * (1.0 + 3.0 * _GELU_C * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du),)

    return _emit("gelu", out, (x,), grad_fn)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by max subtraction."""
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError("softmax", x.shape, detail="last axis must be non-empty")
    z = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)
    return _emit(
        "softmax",
        y,
        (x,),
        lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),),
    )


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then scale and shift."""
    d = x.shape[-1] if x.ndim else 0
    if d < 2:
        raise ShapeError("layer_norm", x.shape, detail="normalised axis needs at least 2 entries")
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = gamma.data * xhat + beta.data

    def grad_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        dxhat = g * gamma.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit("layer_norm", out, (x, gamma, beta), grad_fn)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    """Inverted dropout; identity outside training or when ``p`` is 0."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return _emit("dropout", x.data * mask, (x,), lambda g: (g * mask,))


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor._wrap(x.data.copy(), False)


# differentiation


def backward(
    tape: Tape, loss: Tensor, params: Optional[Mapping[str, Tensor]] = None
) -> Dict[str, np.ndarray]:
    """Propagate d(loss) back through ``tape``.

    Every tensor with ``requires_grad`` reachable from ``loss`` gets its
    ``grad`` overwritten; leaves on the tape and any ``params`` that the loss
    does not reach get zeros. Returns the gradients of ``params`` by name.
    """
    if tape.consumed:
        raise TapeError("tape already consumed; each forward graph supports one backward pass")
    if loss.size != 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TapeError("loss is not connected to any tensor that requires grad")
    tape.consumed = True

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        node.output.grad = g
        for tensor, tensor_grad in zip(node.inputs, node.grad_fn(g)):
            if tensor_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            pending[key] = pending[key] + tensor_grad if key in pending else tensor_grad

    leaves = dict(tape._leaves)
    if params:
        leaves.update({id(t): t for t in params.values() if t.requires_grad})
    if loss.requires_grad and id(loss) not in tape._produced:
        leaves[id(loss)] = loss
    for key, tensor in leaves.items():
        grad = pending.get(key)
        tensor.grad = np.zeros_like(tensor.data) if grad is None else np.array(grad, dtype=np.float64).reshape(tensor.shape)
        _check_finite("backward", tensor.grad)
    return {name: t.grad for name, t in (params or {}).items() if t.grad is not None}


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    coords: Optional[Sequence[int]] = None,
    floor: float = 1e-7,
) -> float:
    """Maximum relative error between the tape gradient and central differences.

    ``f`` maps ``x`` (possibly through closed-over tensors) to a scalar. The
    error per coordinate is ``|a - cd| / max(|a|, |cd|, floor)``.
    """
    if not x.requires_grad:
        x.requires_grad = True
        x.grad = np.zeros_like(x.data)
    with Tape() as tape:
        out = f(x)
    if out.size != 1:
        raise TapeError(f"grad_check needs a scalar function, got shape {out.shape}")
    repeat = f(x)
    if not np.array_equal(out.data, repeat.data):
        raise NonDeterminismError("function returned different values for identical inputs")
    backward(tape, out)
    analytic = x.grad.reshape(-1).copy()

    flat = x.data.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    worst = 0.0
    for c in indices:
        original = flat[c]
        flat[c] = original + eps
        f_plus = f(x).item()
        flat[c] = original - eps
        f_minus = f(x).item()
        flat[c] = original
        cd = (f_plus - f_minus) / (2.0 * eps)
        err = abs(analytic[c] - cd) / max(abs(analytic[c]), abs(cd), floor)
        worst = max(worst, err)
    logger.debug("grad_check over %d coordinates: max relative error %.3e", len(indices), worst)
    return worst


def named_tensors(obj: Any, prefix: str = "") -> Dict[str, Tensor]:
    """Flatten a (nested) dataclass of tensors into ``{"a.b.0.c": tensor}``."""
    found: Dict[str, Tensor] = {}
    if obj is None:
        return found
    if isinstance(obj, Tensor):
        found[prefix] = obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            key = f"{prefix}.{f.name}" if prefix else f.name
            found.update(named_tensors(getattr(obj, f.name), key))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            found.update(named_tensors(item, f"{prefix}.{i}" if prefix else str(i)))
    return found


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=name)


def zeros(shape: Sequence[int], name: str, requires_grad: bool = True) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad, name=name)


def ones(shape: Sequence[int], name: str, requires_grad: bool = True) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad, name=name)
