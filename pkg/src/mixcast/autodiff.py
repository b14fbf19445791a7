"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a backward closure on the produced
tensor; ``backward(loss)`` walks the recorded graph in reverse topological
order. Elementwise GELU, softmax, and layernorm go through the kernel
backend in ``_fast`` (compiled when available, numpy otherwise).
"""

import contextlib
import threading
import weakref

import numpy as np

from ._fast import gelu_bwd, gelu_fwd, layernorm_rows, softmax_rows
from .errors import ShapeError

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class _AllocTracker:
    """Tracks live tensor bytes; used by the profiler's peak-memory metric."""

    def __init__(self):
        self.enabled = False
        self.current = 0
        self.peak = 0

    def start(self):
        self.enabled = True
        self.current = 0
        self.peak = 0

    def stop(self):
        self.enabled = False
        return self.peak

    def add(self, nbytes):
        self.current += nbytes
        if self.current > self.peak:
            self.peak = self.current

    def sub(self, nbytes):
        self.current -= nbytes


alloc_tracker = _AllocTracker()


def _track(tensor, nbytes):
    alloc_tracker.add(nbytes)
    weakref.finalize(tensor, alloc_tracker.sub, nbytes)


class Tensor:
    """A numpy-backed array plus an optional gradient and graph node."""

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        if alloc_tracker.enabled:
            _track(self, self.data.nbytes)

    # -- basics ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), Tensor(-1.0)))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, Tensor(-1.0)))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; use mul with a reciprocal constant")
        return mul(self, Tensor(1.0 / other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    # -- shape ops ------------------------------------------------------

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    requires = _grad_enabled() and any(p.requires_grad for p in parents)
    if requires:
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- primitives ---------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")

    def backward(out):
        g = out.grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    out_data = a.data @ b.data

    def backward(out):
        g = out.grad
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.expand_dims(g, -1) * b.data
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim > 1:
                gb = np.swapaxes(a.data, -1, -2) @ g
            else:
                gb = np.outer(a.data, g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), backward)


def reshape(x, shape):
    x = _wrap(x)
    out_data = x.data.reshape(shape)

    def backward(out):
        if x.requires_grad:
            x._accumulate(out.grad.reshape(x.shape))

    return _make(out_data, (x,), backward)


def transpose(x, axes):
    x = _wrap(x)
    if any(ax >= x.ndim or ax < -x.ndim for ax in axes):
        raise ShapeError(f"transpose: axes {axes} invalid for rank {x.ndim}")
    out_data = np.transpose(x.data, axes)
    inverse = np.argsort([ax % x.ndim for ax in axes])

    def backward(out):
        if x.requires_grad:
            x._accumulate(np.transpose(out.grad, inverse))

    return _make(out_data, (x,), backward)


def concat(tensors, axis):
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(out.grad[tuple(idx)])

    return _make(out_data, tuple(tensors), backward)


def slice_(x, idx):
    x = _wrap(x)
    out_data = x.data[idx]

    def backward(out):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            np.add.at(g, idx, out.grad)
            x._accumulate(g)

    return _make(out_data, (x,), backward)


def sum_(x, axis=None, keepdims=False):
    x = _wrap(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(out):
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape).copy())

    return _make(out_data, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = _wrap(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


def gelu(x):
    x = _wrap(x)
    out_data = gelu_fwd(x.data)

    def backward(out):
        if x.requires_grad:
            x._accumulate(gelu_bwd(x.data, out.grad))

    return _make(out_data, (x,), backward)


def softmax(x, axis=-1):
    x = _wrap(x)
    axis = axis % x.ndim
    if axis != x.ndim - 1:
        moved = transpose(x, tuple(i for i in range(x.ndim) if i != axis) + (axis,))
        out = softmax(moved, axis=-1)
        back = list(range(x.ndim - 1))
        back.insert(axis, x.ndim - 1)
        return transpose(out, tuple(back))
    cols = x.shape[-1]
    y = softmax_rows(x.data.reshape(-1, cols)).reshape(x.shape)

    def backward(out):
        if x.requires_grad:
            g = out.grad
            x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (x,), backward)


def layernorm(x, norm_axes=1, eps=1e-5):
    """Normalize over the last ``norm_axes`` axes (no affine)."""
    x = _wrap(x)
    if norm_axes < 1 or norm_axes > x.ndim:
        raise ShapeError(f"layernorm: norm_axes={norm_axes} invalid for rank {x.ndim}")
    cols = int(np.prod(x.shape[-norm_axes:]))
    y2d, _, rstd = layernorm_rows(x.data.reshape(-1, cols), eps)
    y = y2d.reshape(x.shape)

    def backward(out):
        if x.requires_grad:
            g = out.grad.reshape(-1, cols)
            yh = y2d
            dx = rstd[:, None] / cols * (
                cols * g - g.sum(axis=1, keepdims=True) - yh * (g * yh).sum(axis=1, keepdims=True)
            )
            x._accumulate(dx.reshape(x.shape))

    return _make(y, (x,), backward)


def dropout(x, p, rng, training):
    """Inverted dropout; the exact identity (same object) when not training."""
    x = _wrap(x)
    if not training or p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(mask))


def mse(pred, target):
    """Mean squared error over all elements; target is treated as constant."""
    pred, target = _wrap(pred), _wrap(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes {pred.shape} and {target.shape} differ")
    diff = pred - Tensor(target.data)
    return mean(mul(diff, diff))


# -- backward driver ----------------------------------------------------


def backward(loss):
    """Populate .grad on every reachable tensor with requires_grad."""
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node)


class Parameter(Tensor):
    """A named leaf tensor that always requires gradient."""

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"
