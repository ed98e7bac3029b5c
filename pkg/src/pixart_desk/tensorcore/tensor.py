"""Dense float64 tensors with reverse-mode differentiation.

Every op records its inputs and a closure computing the local vector-Jacobian
product. Nodes get a monotonically increasing id at creation, so a backward
sweep in descending id order is a valid reverse topological order.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, ShapeError

DTYPE = np.float64

_ids = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id", "op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._id = next(_ids)
        self.op = "leaf"

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite values produced by {op}")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._id = next(_ids)
        out.op = op
        track = grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        if track:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    # -- differentiation ------------------------------------------------------

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), bw, "mul")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def bw(g):
        return (g * s * (1.0 - s),)

    return Tensor._result(s, (x,), bw, "sigmoid")


def silu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def bw(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return Tensor._result(x.data * s, (x,), bw, "silu")


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    x = as_tensor(x)
    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    th = np.tanh(u)

    def bw(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th * th) * du),)

    return Tensor._result(0.5 * x.data * (1.0 + th), (x,), bw, "gelu")


def _token_broadcast(v: Tensor, x: Tensor) -> Tensor:
    # [..., d] modulation vectors applied over the token axis of x [..., T, d]
    if v.ndim == x.ndim - 1 and v.ndim >= 2:
        return reshape(v, v.shape[:-1] + (1, v.shape[-1]))
    if v.ndim <= 1 or v.ndim == x.ndim:
        return v
    raise ShapeError(f"modulation of shape {v.shape} does not broadcast over {x.shape}")


def scale_shift(x: Tensor, scale, shift) -> Tensor:
    """Return ``x * (1 + scale) + shift`` with scale/shift broadcast over tokens."""
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    scale = _token_broadcast(scale, x)
    shift = _token_broadcast(shift, x)
    return add(mul(x, add(scale, 1.0)), shift)


def gate(x: Tensor, alpha) -> Tensor:
    x, alpha = as_tensor(x), as_tensor(alpha)
    return mul(x, _token_broadcast(alpha, x))


# -- linear algebra ---------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes with batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch dims {a.shape} and {b.shape}") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


# -- shape manipulation -----------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None

    def bw(g):
        return (g.reshape(x.shape),)

    return Tensor._result(np.ascontiguousarray(out), (x,), bw, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    if not axes:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.transpose(g, inv),)

    return Tensor._result(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), bw, "transpose")


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def getitem(x: Tensor, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(np.array(out, dtype=DTYPE), (x,), bw, "getitem")


def chunk(x: Tensor, n: int, axis: int = -1) -> list[Tensor]:
    size = x.shape[axis]
    if size % n:
        raise ShapeError(f"chunk: axis of length {size} not divisible into {n}")
    step = size // n
    axis = axis % x.ndim
    pieces = []
    for i in range(n):
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(i * step, (i + 1) * step)
        pieces.append(getitem(x, tuple(idx)))
    return pieces


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(out, tensors, bw, "concat")


# -- reductions -------------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._result(np.asarray(out, dtype=DTYPE), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis, keepdims), 1.0 / n)


# -- normalisation and attention weights ------------------------------------------


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (broadcastable boolean, True = keep) forces excluded positions to
    exactly zero weight. Every row must keep at least one position.
    """
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise ShapeError("softmax over an empty axis")
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not np.all(mask.any(axis=-1)):
            raise ContractError("softmax: a row has every position masked")
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._result(y, (x,), bw, "softmax")


def layer_norm(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise the last axis to zero mean and unit variance (no affine)."""
    x = as_tensor(x)
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def bw(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return Tensor._result(y, (x,), bw, "layer_norm")


# -- backward sweep ---------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in nodes:
            continue
        nodes[node._id] = node
        stack.extend(p for p in node._parents if p.requires_grad)

    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.pop(nid, None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(parent._id)
            grads[parent._id] = pg if prev is None else prev + pg
