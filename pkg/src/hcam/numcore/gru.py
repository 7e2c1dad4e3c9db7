"""GRU cell and sequence ops.

Recurrence (fixed convention)::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_c x + U_c (r * h) + b_c)
    h' = (1 - z) * h + z * h~
"""
import numpy as np

from ..errors import ShapeError
from . import _kernels
from .functional import linear
from .module import Module, uniform_init, zeros_param
from .tensor import Tensor, as_tensor, concat, sigmoid, tanh


class GruCellParams(Module):
    """Weights for one GRU direction.

    Gate matrices are stored stacked, rows ordered [update; reset; candidate]:
    ``w_ih`` is (3H, input_dim), ``w_hh`` is (3H, H), ``b`` is (3H,).
    """

    def __init__(self, input_dim, hidden_dim, rng, dtype=np.float32):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        H = hidden_dim
        self.w_ih = Tensor(np.concatenate(
            [uniform_init(rng, (H, input_dim), input_dim, dtype).data for _ in range(3)]), requires_grad=True)
        self.w_hh = Tensor(np.concatenate(
            [uniform_init(rng, (H, H), H, dtype).data for _ in range(3)]), requires_grad=True)
        self.b = zeros_param((3 * H,), dtype)

    def gate(self, name):
        """(input-to-hidden, hidden-to-hidden, bias) arrays for one gate."""
        k = {"update": 0, "reset": 1, "candidate": 2}[name]
        H = self.hidden_dim
        sl = slice(k * H, (k + 1) * H)
        return self.w_ih.data[sl], self.w_hh.data[sl], self.b.data[sl]


def gru_cell(x, h_prev, p):
    """One GRU step built from primitive ops (reference path)."""
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    H = p.hidden_dim
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != H:
        raise ShapeError(
            f"gru_cell: got x[..., {x.shape[-1]}], h[..., {h_prev.shape[-1]}]; "
            f"expected input_dim={p.input_dim}, hidden_dim={H}")
    ax = linear(x, p.w_ih, p.b)
    zr = sigmoid(ax[..., : 2 * H] + linear(h_prev, p.w_hh[: 2 * H]))
    z, r = zr[..., :H], zr[..., H:]
    c = tanh(ax[..., 2 * H:] + linear(r * h_prev, p.w_hh[2 * H:]))
    return (1.0 - z) * h_prev + z * c


def gru_sequence(x, mask, p, reverse=False):
    """Run a GRU over (B, T, I) inputs; returns all states (B, T, H).

    ``mask`` is (B, T) with True on valid steps. Invalid steps carry the
    previous state unchanged, so with right-padding the forward direction's
    last state is the final valid state and the reverse direction's state at
    t=0 covers the whole valid prefix.
    """
    x = as_tensor(x)
    B, T, I = x.shape
    if I != p.input_dim:
        raise ShapeError(f"gru_sequence: input width {I} != {p.input_dim}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (B, T):
        raise ShapeError(f"gru_sequence: mask shape {mask.shape} != {(B, T)}")
    H = p.hidden_dim
    dt = x.data.dtype
    w_ih, w_hh, b = p.w_ih.data.astype(dt, copy=False), p.w_hh.data.astype(dt, copy=False), p.b.data.astype(dt, copy=False)
    ax = (x.data.reshape(B * T, I) @ w_ih.T + b).reshape(B, T, 3 * H).transpose(1, 0, 2)
    m = mask.T.astype(dt)
    if reverse:
        ax, m = ax[::-1], m[::-1]
    ax = np.ascontiguousarray(ax)
    m = np.ascontiguousarray(m)
    hs, cache = _kernels.gru_forward(ax, m, w_hh, np.zeros((B, H), dtype=dt))
    if reverse:
        hs = hs[::-1]
    out = np.ascontiguousarray(hs.transpose(1, 0, 2))
    xd = x.data

    def bw(g):
        gt = g.transpose(1, 0, 2)
        if reverse:
            gt = gt[::-1]
        dax, dw_hh, _ = _kernels.gru_backward(np.ascontiguousarray(gt), cache, m, w_hh)
        if reverse:
            dax = dax[::-1]
        dax2 = dax.transpose(1, 0, 2).reshape(B * T, 3 * H)
        dx = (dax2 @ w_ih).reshape(B, T, I)
        dw_ih = dax2.T @ xd.reshape(B * T, I)
        return dx, dw_ih, dw_hh, dax2.sum(axis=0)

    return Tensor._from_op(out, (x, p.w_ih, p.w_hh, p.b), bw)


class BiGRU(Module):
    """Two independent GRU directions; outputs are concatenated per step."""

    def __init__(self, input_dim, hidden_dim, rng, dtype=np.float32):
        self.fwd = GruCellParams(input_dim, hidden_dim, rng, dtype)
        self.bwd = GruCellParams(input_dim, hidden_dim, rng, dtype)

    def __call__(self, x, mask):
        """Returns (per-step states (B, T, 2H), forward final (B, H), backward final (B, H))."""
        hf = gru_sequence(x, mask, self.fwd)
        hb = gru_sequence(x, mask, self.bwd, reverse=True)
        return concat([hf, hb], axis=-1), hf[:, -1], hb[:, 0]
