"""Fused differentiable ops with hand-written backward passes."""
import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor, as_tensor, unbroadcast

LAYER_NORM_EPS = 1e-5


def softmax_rows(x):
    """Softmax over the last axis, max-subtracted."""
    x = as_tensor(x)
    if not np.isfinite(x.data).all():
        raise NumericError("softmax_rows: non-finite input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, (x,), bw)


def log_softmax(x):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out, (x,), bw)


def layer_norm(x, gamma, beta, eps=LAYER_NORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    Rows with zero variance come out as ``beta`` (the eps guard keeps the
    division finite).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gamma/beta must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(out, (x, gamma, beta), bw)


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` over any number of leading axes."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ xd.reshape(-1, xd.shape[-1])
        grads = [g @ wd, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return Tensor._from_op(out, parents, bw)


def conv1d(x, weight, bias, padding=0):
    """Temporal convolution.

    x: (B, T, C_in); weight: (C_out, C_in, k); bias: (C_out,).
    Returns (B, T + 2*padding - k + 1, C_out).
    """
    x = as_tensor(x)
    B, T, cin = x.shape
    cout, wcin, k = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv1d: input channels {cin} != weight channels {wcin}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    t_out = xp.shape[1] - k + 1
    if t_out < 1:
        raise ShapeError("conv1d: sequence shorter than kernel")
    # (B, t_out, C_in, k)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    cols2 = cols.reshape(B * t_out, cin * k)
    wmat = weight.data.reshape(cout, cin * k)
    out = (cols2 @ wmat.T).reshape(B, t_out, cout) + bias.data

    def bw(g):
        g2 = g.reshape(B * t_out, cout)
        gw = (g2.T @ cols2).reshape(weight.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wmat).reshape(B, t_out, cin, k)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j:j + t_out, :] += gcols[..., j]
        gx = gxp[:, padding:padding + T, :] if padding else gxp
        return gx, gw, gb

    return Tensor._from_op(out, (x, weight, bias), bw)


def l2_normalize(x, eps=1e-12):
    """Scale each row (last axis) to unit L2 norm."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    n = np.maximum(n, eps)
    y = x.data / n

    def bw(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / n,)

    return Tensor._from_op(y, (x,), bw)


def dropout(x, p, rng, training=True):
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * keep


def masked_rows(x, mask):
    """Zero rows (second-to-last axis) where ``mask`` is False."""
    m = np.asarray(mask, dtype=x.dtype)[..., None]
    return x * m


def bias_add(x, b):
    x = as_tensor(x)
    return Tensor._from_op(x.data + b.data, (x, b), lambda g: (g, unbroadcast(g, b.shape)))
