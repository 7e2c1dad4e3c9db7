"""A small reverse-mode autodiff tensor over numpy arrays.

Each op records its parents and a closure that maps the output gradient to
parent gradients. ``backward`` walks the graph in reverse topological order
and accumulates ``.grad`` on leaf tensors only.
"""
from contextlib import contextmanager

import numpy as np

from ..errors import NumericError, ShapeError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


def _as_float_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if dtype is None and arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


def _check_finite(arr, what="tensor"):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {what}")


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (undo numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = _as_float_array(data, dtype)
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        if not np.isfinite(data).all():
            raise NumericError("operation produced non-finite values")
        out.data = data
        out.grad = None
        out.name = None
        track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    # -- backward ------------------------------------------------------
    def backward(self, grad=None):
        if not self.requires_grad:
            raise NumericError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without grad needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _lift(a, like):
    if isinstance(a, Tensor):
        return a
    return Tensor(np.asarray(a, dtype=like.data.dtype))


# -- elementwise binary ------------------------------------------------
def add(a, b):
    a, b = (_lift(a, b), b) if not isinstance(a, Tensor) else (a, _lift(b, a))
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return Tensor._from_op(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = (_lift(a, b), b) if not isinstance(a, Tensor) else (a, _lift(b, a))
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return Tensor._from_op(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = (_lift(a, b), b) if not isinstance(a, Tensor) else (a, _lift(b, a))
    ad, bd = a.data, b.data

    def bw(g):
        return unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)

    return Tensor._from_op(ad * bd, (a, b), bw)


def div(a, b):
    a, b = (_lift(a, b), b) if not isinstance(a, Tensor) else (a, _lift(b, a))
    ad, bd = a.data, b.data
    if np.any(bd == 0):
        raise NumericError("division by zero")
    out = ad / bd

    def bw(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return Tensor._from_op(out, (a, b), bw)


def power(a, p):
    ad = a.data
    out = ad ** p

    def bw(g):
        return (g * p * ad ** (p - 1),)

    return Tensor._from_op(out, (a,), bw)


def matmul(a, b):
    """Batched matmul for operands with ndim >= 2."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands with at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return Tensor._from_op(ad @ bd, (a, b), bw)


# -- elementwise unary -------------------------------------------------
def exp(a):
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,))


def log(a):
    ad = a.data
    if np.any(ad <= 0):
        raise NumericError("log of non-positive value")
    return Tensor._from_op(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a):
    out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    out = np.tanh(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    out = _sigmoid(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    pos = a.data > 0
    return Tensor._from_op(a.data * pos, (a,), lambda g: (g * pos,))


def _sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- reductions and shape ops -----------------------------------------
def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._from_op(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    old = a.shape
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return Tensor._from_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, idx):
    shape, dtype = a.shape, a.data.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._from_op(np.array(a.data[idx]), (a,), bw)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def stack(tensors, axis=0):
    tensors = list(tensors)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(np.stack([t.data for t in tensors], axis=axis), tensors, bw)
