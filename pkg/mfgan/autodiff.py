"""Dense tensors with a reverse-mode gradient tape.

Every forward op returns a :class:`Tensor` whose node remembers its inputs and
a backward rule. :func:`backward` walks the graph once from a scalar loss,
hands back a :class:`GradientSet` keyed by parameter name and consumes the
tape. Storage is numpy; the default dtype is float32 and can be raised to
float64 with :func:`precision` (gradient checks do this).

Graph construction state (grad mode, dtype) is thread local, so separate
threads can build and differentiate their own graphs against shared,
read-only parameters.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

# Fill value for masked attention logits. exp(MASK_VALUE - max) underflows to
# exactly 0.0 in float32 and float64.
MASK_VALUE = -1e9

_local = threading.local()


def _grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


def get_default_dtype():
    """Floating dtype used for new tensors and parameters in this thread."""
    return getattr(_local, "dtype", np.float32)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate ops without recording them on the tape."""
    prev = _grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default dtype (e.g. ``np.float64`` for checks)."""
    prev = get_default_dtype()
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _local.dtype = prev


def _as_array(data) -> np.ndarray:
    if isinstance(data, Tensor):
        return data.data
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=get_default_dtype())


def _consumed(grad):
    raise ContractError("tape already consumed by a previous backward pass")


class Tensor:
    """A numpy array plus the tape record that produced it."""

    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable] = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # -- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Tensor":
        return swapaxes(self, -1, -2)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


TensorLike = Union[Tensor, np.ndarray, float, int, Sequence]


def parameter(data, name: str) -> Tensor:
    """Create a trainable leaf in the default dtype."""
    return Tensor(np.array(data, dtype=get_default_dtype()), requires_grad=True, name=name)


def _tensor(x: TensorLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    data = np.asarray(data)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError as e:
        raise ShapeError(f"{op}: shapes {a} and {b} do not broadcast") from e


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x: TensorLike, c: float) -> Tensor:
    x = _tensor(x)
    c = float(c)
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x: TensorLike) -> Tensor:
    x = _tensor(x)
    positive = x.data > 0
    return _node(np.where(positive, x.data, 0).astype(x.dtype), (x,), lambda g: (g * positive,), "relu")


def dropout(x: TensorLike, p: float, training: bool = True,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability ``p``, rescale survivors by 1/(1-p).

    Identity in evaluation mode or when ``p == 0``.
    """
    x = _tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def stable_sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function without overflow; exactly 0.5 at 0."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: TensorLike) -> Tensor:
    x = _tensor(x)
    y = stable_sigmoid(x.data).astype(x.dtype)
    return _node(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


def softplus(x: TensorLike) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    x = _tensor(x)
    y = np.logaddexp(0.0, x.data).astype(x.dtype)
    slope = stable_sigmoid(x.data).astype(x.dtype)
    return _node(y, (x,), lambda g: (g * slope,), "softplus")


_ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "relu": relu,
    "add": add,
    "scale": scale,
    "dropout": dropout,
}


def elementwise(kind: str, *args, **kwargs) -> Tensor:
    """Dispatch one of the named elementwise ops (relu, add, scale, dropout)."""
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op: {kind}") from None
    return op(*args, **kwargs)


# ---------------------------------------------------------------------------
# linear algebra and shape
# ---------------------------------------------------------------------------

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    _broadcast_shape(a.shape[:-2], b.shape[:-2], "matmul")

    def backward_rule(g):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return _node(np.matmul(a.data, b.data), (a, b), backward_rule, "matmul")


def swapaxes(x: TensorLike, axis1: int, axis2: int) -> Tensor:
    x = _tensor(x)
    return _node(np.swapaxes(x.data, axis1, axis2), (x,),
                 lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes")


def reshape(x: TensorLike, shape: Sequence[int]) -> Tensor:
    x = _tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from e
    return _node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    parts = [_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from e
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward_rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, parts, backward_rule, "concat")


def getitem(x: TensorLike, index) -> Tensor:
    """Gather by numpy index; the backward pass scatter-adds into the source."""
    x = _tensor(x)
    out = np.array(x.data[index], copy=True)

    def backward_rule(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _node(out, (x,), backward_rule, "getitem")


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape).

    Repeated ids accumulate their gradients in the shared row.
    """
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)][0]
        raise IndexError(f"embedding id {bad} outside [0, {vocab})")
    out = getitem(table, ids)
    if out.requires_grad:
        out.op = "embedding"
    return out


# ---------------------------------------------------------------------------
# reductions and normalisation
# ---------------------------------------------------------------------------

def reduce_sum(x: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    x = _tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_rule(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), backward_rule, "sum")


def reduce_mean(x: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    x = _tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax_rows(x: TensorLike) -> Tensor:
    """Softmax over the last axis, shifted by the row max before exponentiation."""
    x = _tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward_rule(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), backward_rule, "softmax")


def log_softmax(x: TensorLike) -> Tensor:
    x = _tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    probs = np.exp(y)

    def backward_rule(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _node(y, (x,), backward_rule, "log_softmax")


def masked_fill(x: TensorLike, mask, value: float = MASK_VALUE) -> Tensor:
    """Replace positions where ``mask`` is true by ``value`` (pre-softmax masking)."""
    x = _tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if _broadcast_shape(x.shape, mask.shape, "masked_fill") != x.shape:
        raise ShapeError(f"masked_fill: mask {mask.shape} is larger than input {x.shape}")
    out = np.where(mask, x.dtype.type(value), x.data)
    return _node(out, (x,), lambda g: (np.where(mask, 0, g).astype(g.dtype),), "masked_fill")


def layer_norm(x: TensorLike, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    x = _tensor(x)
    width = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv
    out = xhat * gamma.data + beta.data

    def backward_rule(g):
        dxhat = g * gamma.data
        dx = (inv / width) * (
            width * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return (dx, g * xhat, g)

    return _node(out, (x, gamma, beta), backward_rule, "layer_norm")


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

class GradientSet(dict):
    """Parameter name -> gradient array. A missing name means a zero gradient."""

    def of(self, param: Tensor) -> np.ndarray:
        grad = self.get(param.name)
        return np.zeros_like(param.data) if grad is None else grad

    def l2_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in self.values())))


def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> GradientSet:
    """Differentiate a scalar ``loss`` with respect to every leaf parameter.

    Non-leaf gradients are discarded and the tape is consumed: calling this a
    second time on the same graph raises :class:`ContractError`.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = GradientSet()
    if not loss.requires_grad:
        return grads
    if loss._backward is _consumed:
        _consumed(None)

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            key = node.name or f"<unnamed:{id(node)}>"
            grads[key] = grads[key] + g if key in grads else g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=parent.dtype), parent.shape)
            pending[id(parent)] = pending[id(parent)] + pg if id(parent) in pending else pg
        node._parents = ()
        node._backward = _consumed
    return grads


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def finite_diff_grad(f: Callable[[], Union[Tensor, float]], params: Mapping[str, Tensor],
                     eps: float = 1e-3) -> GradientSet:
    """Central-difference gradient of ``f()`` over every coordinate of ``params``.

    ``f`` reads the parameters through the given tensors; each coordinate is
    perturbed in place and restored afterwards.
    """
    grads = GradientSet()
    with no_grad():
        for name, param in params.items():
            base = param.data
            work = base.copy()
            estimate = np.zeros(base.shape, dtype=np.float64)
            try:
                param.data = work
                for idx in np.ndindex(base.shape):
                    original = work[idx]
                    work[idx] = original + eps
                    upper = _scalar(f())
                    work[idx] = original - eps
                    lower = _scalar(f())
                    work[idx] = original
                    estimate[idx] = (upper - lower) / (2.0 * eps)
            finally:
                param.data = base
            grads[name] = estimate.astype(base.dtype)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative difference, 0 when both are zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)
