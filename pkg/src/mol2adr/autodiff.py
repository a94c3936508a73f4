"""Dense numpy tensors with tape-based reverse-mode differentiation.

Operations only record onto the active :class:`Tape` (entered with ``with``)
and only when at least one input requires gradients, so inference code runs
without a tape and costs nothing extra::

    with Tape() as tape:
        loss = cross_entropy_masked(logits(x), targets)
    backward(loss, tape, params)

Float width is process-wide: 64-bit for gradient checks, 32-bit for training
(see :func:`set_float_width`).
"""

import logging
import threading
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AllPositionsMasked, NonScalarLoss, NotOnTape, ShapeMismatch

logger = logging.getLogger(__name__)

_DTYPE = {"value": np.float64}
_local = threading.local()

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


def set_float_width(bits: int) -> None:
    """Select 32- or 64-bit floats for newly created tensors."""
    if bits not in (32, 64):
        raise ValueError(f"float width must be 32 or 64, got {bits}")
    _DTYPE["value"] = np.float64 if bits == 64 else np.float32


def float_width() -> int:
    return 64 if _DTYPE["value"] is np.float64 else 32


def dtype():
    return _DTYPE["value"]


class Tensor:
    """A numpy array plus an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=_DTYPE["value"])
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.records: List[Tuple[Tensor, Tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.records)


def active_tape() -> Optional[Tape]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append((out, tuple(inputs), backward_fn))
    return out


def _result(values: np.ndarray) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(values, dtype=_DTYPE["value"])
    out.requires_grad = False
    out.grad = None
    out.name = ""
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from e


# --- elementwise --------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    out = _result(a.data + b.data)
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    out = _result(a.data - b.data)
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = _result(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _record(_result(-a.data), (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _record(_result(a.data * c), (a,), lambda g: (g * c,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    positive = a.data > 0
    out = _result(np.where(positive, a.data, slope * a.data))
    return _record(out, (a,), lambda g: (np.where(positive, g, slope * g),))


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0
    return _record(_result(np.where(positive, a.data, 0.0)), (a,), lambda g: (g * positive,))


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    positive = a.data > 0
    neg_part = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    out = _result(np.where(positive, a.data, neg_part))
    return _record(out, (a,), lambda g: (np.where(positive, g, g * (neg_part + alpha)),))


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return _record(_result(a.data * keep), (a,), lambda g: (g * keep,))


# --- linear algebra and shape ---------------------------------------------------------


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product over the last two axes (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        values = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}") from e

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(_result(values), (a, b), backward)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; by default swap the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record(_result(np.transpose(a.data, axes)), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        values = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatch(f"reshape: cannot view {a.shape} as {tuple(shape)}") from e
    return _record(_result(values), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        values = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        shapes = [t.shape for t in tensors]
        raise ShapeMismatch(f"concat: incompatible shapes {shapes} on axis {axis}") from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(_result(values), tensors, backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    values = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(_result(values), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[x] for x in np.atleast_1d(axis)])
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def getitem(a: Tensor, index) -> Tensor:
    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record(_result(a.data[index]), (a,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding_lookup: id out of range for table of {table.shape[0]} rows")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _record(_result(table.data[ids]), (table,), backward)


take = embedding_lookup


# --- segment operations (graph message passing) ---------------------------------------------


def segment_sum(values: Tensor, segment_ids, n_segments: int) -> Tensor:
    """Sum rows of ``values`` into ``n_segments`` buckets."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if values.shape[0] != segment_ids.shape[0]:
        raise ShapeMismatch(
            f"segment_sum: {values.shape[0]} rows but {segment_ids.shape[0]} segment ids"
        )
    out = np.zeros((n_segments,) + values.shape[1:], dtype=values.data.dtype)
    np.add.at(out, segment_ids, values.data)
    return _record(_result(out), (values,), lambda g: (g[segment_ids],))


def segment_softmax(scores: Tensor, segment_ids, n_segments: int) -> Tensor:
    """Softmax of ``scores`` (first axis) within each segment."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    data = scores.data
    maxes = np.full((n_segments,) + data.shape[1:], -np.inf, dtype=data.dtype)
    np.maximum.at(maxes, segment_ids, data)
    exps = np.exp(data - maxes[segment_ids])
    totals = np.zeros_like(maxes)
    np.add.at(totals, segment_ids, exps)
    probs = exps / totals[segment_ids]

    def backward(g):
        weighted = np.zeros_like(maxes)
        np.add.at(weighted, segment_ids, g * probs)
        return (probs * (g - weighted[segment_ids]),)

    return _record(_result(probs), (scores,), backward)


# --- normalization and losses -----------------------------------------------------------


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Numerically stable softmax over the last axis.

    Args:
        a: Logits
        mask: Boolean array broadcastable to ``a``; True marks valid positions.
            Masked positions get exactly 0.

    Raises:
        AllPositionsMasked: If some row has no valid position
    """
    data = a.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        if not mask.any(axis=-1).all():
            raise AllPositionsMasked("softmax over a row with every position masked")
        data = np.where(mask, data, -np.inf)
    shifted = data - data.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    if mask is not None:
        exps = np.where(mask, exps, 0.0)
    probs = exps / exps.sum(axis=-1, keepdims=True)

    def backward(g):
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _record(_result(probs), (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeMismatch(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    width = x.shape[-1]

    def backward(g):
        dxhat = g * gain.data
        dx = (inv / width) * (
            width * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _record(_result(xhat * gain.data + bias.data), (x, gain, bias), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def cross_entropy_masked(logits: Tensor, targets, ignore_id: int = 0) -> Tensor:
    """Mean negative log-likelihood over positions whose target is not ``ignore_id``.

    Raises:
        AllPositionsMasked: If every target equals ``ignore_id``
        ShapeMismatch: If targets do not match the leading logits axes
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeMismatch(
            f"cross_entropy_masked: targets {targets.shape} vs logits {logits.shape}"
        )
    valid = targets != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise AllPositionsMasked("cross_entropy_masked: no target position is valid")

    flat = logits.data.reshape(-1, logits.shape[-1])
    shifted = flat - flat.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.nonzero(valid.reshape(-1))[0]
    picked = log_probs[rows, targets.reshape(-1)[rows]]
    loss = -picked.sum() / n_valid

    def backward(g):
        grad = np.exp(log_probs)
        grad[rows, targets.reshape(-1)[rows]] -= 1.0
        grad[~valid.reshape(-1)] = 0.0
        return ((g * grad / n_valid).reshape(logits.shape),)

    return _record(_result(loss), (logits,), backward)


# --- backward pass ---------------------------------------------------------------------


def backward(
    loss: Tensor, tape: Optional[Tape] = None, params: Optional[Iterable[Tensor]] = None
) -> None:
    """Populate ``.grad`` of every requires-grad tensor reachable from ``loss``.

    Tensors listed in ``params`` that the loss does not depend on receive an
    all-zero gradient.

    Raises:
        NonScalarLoss: If ``loss`` has more than one element
        NotOnTape: If ``loss`` was not produced on ``tape``
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = tape if tape is not None else active_tape()
    if tape is None:
        raise NotOnTape("no tape to differentiate")
    end = next(
        (k for k in range(len(tape.records) - 1, -1, -1) if tape.records[k][0] is loss), None
    )
    if end is None:
        raise NotOnTape("loss was not recorded on this tape")

    grads = {id(loss): np.ones_like(loss.data)}
    seen = {}
    for out, inputs, backward_fn in reversed(tape.records[: end + 1]):
        g_out = grads.pop(id(out), None)
        if g_out is None:
            continue
        for tensor, g in zip(inputs, backward_fn(g_out)):
            if g is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            seen[key] = tensor
            grads[key] = grads[key] + g if key in grads else g
    for key, tensor in seen.items():
        if key in grads:
            tensor.grad = np.asarray(grads[key], dtype=tensor.data.dtype).reshape(tensor.shape)
    for param in params or ():
        if id(param) not in seen:
            param.grad = np.zeros_like(param.data)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` must be scalar-valued and deterministic; run in 64-bit mode.
    """
    x.requires_grad = True
    with Tape() as tape:
        out = f(x)
    backward(out, tape, [x])
    analytic = x.grad.copy()

    numeric = np.zeros_like(x.data)
    for i in range(x.data.size):
        original = x.data.flat[i]
        x.data.flat[i] = original + eps
        plus = f(x).item()
        x.data.flat[i] = original - eps
        minus = f(x).item()
        x.data.flat[i] = original
        numeric.flat[i] = (plus - minus) / (2 * eps)

    error = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(error.max()) if error.size else 0.0
