"""Small define-by-run reverse-mode autodiff over numpy arrays.

Every operation on :class:`Tensor` records its parents and a closure that
pushes the output gradient back into them. ``backward`` walks the recorded
graph once in reverse topological order and then releases it, so a second
call on the same loss raises :class:`StaleTapeError`.

All values are float64.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "AutodiffError",
    "ShapeError",
    "StaleTapeError",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "softmax",
    "sum",
    "mean",
    "dropout",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "bce_with_logits",
    "backward",
    "grad_wrt_input",
]

DTYPE = np.float64


class AutodiffError(RuntimeError):
    pass


class ShapeError(AutodiffError, ValueError):
    pass


class StaleTapeError(AutodiffError):
    """Raised when backward is called on a graph that was already consumed."""


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_consumed")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE) if not isinstance(data, np.ndarray) else data.astype(DTYPE, copy=False)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"
        self._consumed = False

    # -- basic properties -------------------------------------------------
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
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


# -- element-wise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "sub")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), bw, "div")


def matmul(a, b) -> Tensor:
    """Matrix product with numpy ``@`` semantics for operands of rank >= 2."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul: cannot broadcast {a.shape} @ {b.shape}") from exc

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(out, (a, b), bw, "matmul")


# -- element-wise unary -------------------------------------------------------

def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def bw(g):
        x._accumulate(g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), bw, "relu")


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = _sigmoid_np(np.atleast_1d(x.data)).reshape(x.shape)

    def bw(g):
        x._accumulate(g * s * (1.0 - s))

    return _make(s, (x,), bw, "sigmoid")


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    t = np.tanh(x.data)

    def bw(g):
        x._accumulate(g * (1.0 - t * t))

    return _make(t, (x,), bw, "tanh")


def exp(x) -> Tensor:
    x = _as_tensor(x)
    e = np.exp(x.data)

    def bw(g):
        x._accumulate(g * e)

    return _make(e, (x,), bw, "exp")


def log(x) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        x._accumulate(g / x.data)

    return _make(np.log(x.data), (x,), bw, "log")


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` (rows by default)."""
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accumulate(s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, (x,), bw, "softmax")


# -- reductions and shape ops -------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(np.asarray(out, dtype=DTYPE), (x,), bw, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims) if axes else x.data.copy()

    def bw(g):
        if not keepdims and axes:
            g = np.expand_dims(g, axes)
        x._accumulate(np.broadcast_to(g / n, x.shape))

    return _make(np.asarray(out, dtype=DTYPE), (x,), bw, "mean")


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc

    def bw(g):
        x._accumulate(g.reshape(x.shape))

    return _make(out, (x,), bw, "reshape")


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def bw(g):
        x._accumulate(np.transpose(g, inv))

    return _make(out, (x,), bw, "transpose")


def getitem(x, index) -> Tensor:
    x = _as_tensor(x)
    out = x.data[index]

    def bw(g):
        if x.grad is None:
            x.grad = np.zeros(x.shape, dtype=DTYPE)
        np.add.at(x.grad, index, g) if _has_fancy(index) else _slice_add(x.grad, index, g)

    return _make(np.array(out, dtype=DTYPE), (x,), bw, "getitem")


def _has_fancy(index) -> bool:
    idx = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in idx)


def _slice_add(buf: np.ndarray, index, g: np.ndarray) -> None:
    buf[index] += g


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of empty list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from exc
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(out, ts, bw, "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("stack of empty list")
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from exc
    ax = axis % out.ndim

    def bw(g):
        for i, t in enumerate(ts):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=ax))

    return _make(out, ts, bw, "stack")


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when ``training`` is false or ``p == 0``."""
    x = _as_tensor(x)
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)

    def bw(g):
        x._accumulate(g * keep)

    return _make(x.data * keep, (x,), bw, "dropout")


def bce_with_logits(logits, targets, weights=None) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 targets.

    Computed from logits so large magnitudes stay finite.
    """
    z = _as_tensor(logits)
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != z.shape:
        raise ShapeError(f"bce: logits {z.shape} vs targets {y.shape}")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=DTYPE)
    n = w.sum()
    per = np.maximum(z.data, 0.0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))
    loss = np.asarray((w * per).sum() / n)

    def bw(g):
        s = _sigmoid_np(z.data.reshape(-1)).reshape(z.shape)
        z._accumulate(g * w * (s - y) / n)

    return _make(loss, (z,), bw, "bce")


# -- backward pass ------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf that requires grad."""
    if loss._consumed:
        raise StaleTapeError("graph already consumed by a previous backward call; re-run the forward pass")
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise AutodiffError("loss does not depend on any tensor that requires grad")
    order = _topo_order(loss)
    interior = [n for n in order if n._backward is not None]
    for n in interior:
        n.grad = None
    loss.grad = np.ones(loss.shape, dtype=DTYPE)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if not retain_graph:
        for n in interior:
            n._backward = None
            n._parents = ()
            n._consumed = True
            if n is not loss:
                n.grad = None


def _reachable(root: Tensor, target: Tensor) -> bool:
    return any(n is target for n in _topo_order(root))


def grad_wrt_input(output: Tensor, inp: Tensor) -> np.ndarray:
    """Return d(output)/d(inp) with ``inp``'s shape.

    ``inp`` must be a gradient-tracking tensor that the forward pass used.
    Any stale gradient on ``inp`` is cleared first.
    """
    if not inp.requires_grad or not _reachable(output, inp):
        raise AutodiffError("input is not on the recorded tape of this output")
    inp.grad = None
    backward(output)
    assert inp.grad is not None
    return inp.grad
