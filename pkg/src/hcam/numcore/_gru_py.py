"""Pure-numpy GRU sequence kernel (fallback for the compiled one).

Layout is time-major. ``ax`` holds the input projections ``x_t @ W_ih.T + b``
with gate blocks ordered [update | reset | candidate]. ``u`` is the stacked
hidden-to-hidden matrix (3H x H) in the same block order.

Masked steps (mask == 0) carry the previous state through unchanged.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(ax, mask, u, h0):
    T, B, H3 = ax.shape
    H = H3 // 3
    u_zr, u_c = u[: 2 * H], u[2 * H:]
    hs = np.empty((T, B, H), dtype=ax.dtype)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cs = np.empty_like(hs)
    hp = np.empty_like(hs)
    h = h0
    for t in range(T):
        zr = _sigmoid(ax[t, :, : 2 * H] + h @ u_zr.T)
        z, r = zr[:, :H], zr[:, H:]
        c = np.tanh(ax[t, :, 2 * H:] + (r * h) @ u_c.T)
        hn = (1.0 - z) * h + z * c
        hp[t] = h
        zs[t], rs[t], cs[t] = z, r, c
        h = np.where(mask[t][:, None] != 0, hn, h)
        hs[t] = h
    return hs, (zs, rs, cs, hp)


def gru_backward(dhs, cache, mask, u):
    zs, rs, cs, hp = cache
    T, B, H = dhs.shape
    u_zr, u_c = u[: 2 * H], u[2 * H:]
    dax = np.empty((T, B, 3 * H), dtype=dhs.dtype)
    du = np.zeros_like(u)
    dh = np.zeros((B, H), dtype=dhs.dtype)
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[t]
        on = mask[t][:, None] != 0
        dhn = np.where(on, dh, 0.0)
        h, z, r, c = hp[t], zs[t], rs[t], cs[t]
        dz = dhn * (c - h)
        dc = dhn * z
        dhp = np.where(on, dhn * (1.0 - z), dh)
        dac = dc * (1.0 - c * c)
        drh = dac @ u_c
        dr = drh * h
        dhp = dhp + drh * r
        du[2 * H:] += dac.T @ (r * h)
        dazr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
        du[: 2 * H] += dazr.T @ h
        dhp = dhp + dazr @ u_zr
        dax[t, :, : 2 * H] = dazr
        dax[t, :, 2 * H:] = dac
        dh = dhp
    return dax, du, dh
