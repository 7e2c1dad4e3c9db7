# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled GRU sequence kernel.

Same contract as ``_gru_py``: time-major ``ax`` (T, B, 3H) with gate blocks
[update | reset | candidate], stacked recurrent matrix ``u`` (3H, H), mask
(T, B). Matrix products go through BLAS; gate arithmetic is fused per step.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport copysign, copysignf, expm1, expm1f, fabs, fabsf
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef inline void gemm_rm(bint ta, bint tb, int M, int N, int K, floating alpha,
                         floating* A, int lda, floating* B, int ldb,
                         floating beta, floating* C, int ldc) noexcept nogil:
    # row-major C = alpha * op(A) @ op(B) + beta * C, via column-major BLAS on the transposes
    cdef char tra = b'N'
    cdef char trb = b'N'
    if ta:
        tra = b'T'
    if tb:
        trb = b'T'
    if floating is float:
        sgemm(&trb, &tra, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)
    else:
        dgemm(&trb, &tra, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline floating _tanh(floating x) noexcept nogil:
    # tanh|x| = -e / (e + 2) with e = expm1(-2|x|): no cancellation near 0,
    # saturates to 1 for large |x|, and is much cheaper than libm tanh
    cdef floating e
    if floating is float:
        e = expm1f(-2.0 * fabsf(x))
        return copysignf(-e / (e + 2.0), x)
    else:
        e = expm1(-2.0 * fabs(x))
        return copysign(-e / (e + 2.0), x)


cdef inline floating _sigmoid(floating x) noexcept nogil:
    return 0.5 * (1.0 + _tanh(0.5 * x))


def _forward(floating[:, :, ::1] ax, floating[:, ::1] mask, floating[:, ::1] u,
             floating[:, ::1] h0, hs_arr, zs_arr, rs_arr, cs_arr, hp_arr, g_arr, rh_arr):
    cdef floating[:, :, ::1] hs = hs_arr
    cdef floating[:, :, ::1] zs = zs_arr
    cdef floating[:, :, ::1] rs = rs_arr
    cdef floating[:, :, ::1] cs = cs_arr
    cdef floating[:, :, ::1] hp = hp_arr
    cdef floating[:, ::1] g = g_arr      # (B, 2H) recurrent gate pre-activations
    cdef floating[:, ::1] rh = rh_arr    # (B, H) r * h, then candidate pre-activation
    cdef Py_ssize_t T = ax.shape[0], B = ax.shape[1], H = u.shape[1]
    cdef Py_ssize_t t, b, j
    cdef floating z, r, c, h, hn
    cdef floating* hprev
    cdef floating one = 1.0, zero = 0.0
    with nogil:
        for t in range(T):
            if t == 0:
                hprev = &h0[0, 0]
            else:
                hprev = &hs[t - 1, 0, 0]
            gemm_rm(False, True, <int>B, <int>(2 * H), <int>H, one, hprev, <int>H,
                    &u[0, 0], <int>H, zero, &g[0, 0], <int>(2 * H))
            for b in range(B):
                for j in range(H):
                    h = hprev[b * H + j]
                    hp[t, b, j] = h
                    z = _sigmoid(ax[t, b, j] + g[b, j])
                    r = _sigmoid(ax[t, b, H + j] + g[b, H + j])
                    zs[t, b, j] = z
                    rs[t, b, j] = r
                    rh[b, j] = r * h
            gemm_rm(False, True, <int>B, <int>H, <int>H, one, &rh[0, 0], <int>H,
                    &u[2 * H, 0], <int>H, zero, &g[0, 0], <int>(2 * H))
            for b in range(B):
                for j in range(H):
                    c = _tanh(ax[t, b, 2 * H + j] + g[b, j])
                    cs[t, b, j] = c
                    h = hp[t, b, j]
                    z = zs[t, b, j]
                    hn = (1.0 - z) * h + z * c
                    if mask[t, b] != 0:
                        hs[t, b, j] = hn
                    else:
                        hs[t, b, j] = h


def _backward(floating[:, :, ::1] dhs, floating[:, :, ::1] zs, floating[:, :, ::1] rs,
              floating[:, :, ::1] cs, floating[:, :, ::1] hp, floating[:, ::1] mask,
              floating[:, ::1] u, dax_arr, du_arr, dh_arr, dhp_arr, rh_arr):
    cdef floating[:, :, ::1] dax = dax_arr
    cdef floating[:, ::1] du = du_arr
    cdef floating[:, ::1] dh = dh_arr
    cdef floating[:, ::1] dhp = dhp_arr
    cdef floating[:, ::1] rh = rh_arr
    cdef Py_ssize_t T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t t, b, j
    cdef floating z, r, c, h, dhn, dz, dc
    cdef floating one = 1.0, zero = 0.0
    cdef int ld3 = <int>(3 * H)
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    dh[b, j] = dh[b, j] + dhs[t, b, j]
                    h = hp[t, b, j]
                    z = zs[t, b, j]
                    c = cs[t, b, j]
                    r = rs[t, b, j]
                    rh[b, j] = r * h
                    if mask[t, b] != 0:
                        dhn = dh[b, j]
                        dhp[b, j] = dhn * (1.0 - z)
                    else:
                        dhn = 0.0
                        dhp[b, j] = dh[b, j]
                    dz = dhn * (c - h)
                    dc = dhn * z
                    dax[t, b, j] = dz * z * (1.0 - z)
                    dax[t, b, 2 * H + j] = dc * (1.0 - c * c)
            # dU_c += dac^T @ (r*h)
            gemm_rm(True, False, <int>H, <int>H, <int>B, one, &dax[t, 0, 2 * H], ld3,
                    &rh[0, 0], <int>H, one, &du[2 * H, 0], <int>H)
            # drh = dac @ U_c, staged in dh
            gemm_rm(False, False, <int>B, <int>H, <int>H, one, &dax[t, 0, 2 * H], ld3,
                    &u[2 * H, 0], <int>H, zero, &dh[0, 0], <int>H)
            for b in range(B):
                for j in range(H):
                    r = rs[t, b, j]
                    dhp[b, j] = dhp[b, j] + dh[b, j] * r
                    dax[t, b, H + j] = dh[b, j] * hp[t, b, j] * r * (1.0 - r)
            # dU_zr += dazr^T @ h ; dh_prev += dazr @ U_zr
            gemm_rm(True, False, <int>(2 * H), <int>H, <int>B, one, &dax[t, 0, 0], ld3,
                    &hp[t, 0, 0], <int>H, one, &du[0, 0], <int>H)
            gemm_rm(False, False, <int>B, <int>H, <int>(2 * H), one, &dax[t, 0, 0], ld3,
                    &u[0, 0], <int>H, one, &dhp[0, 0], <int>H)
            for b in range(B):
                for j in range(H):
                    dh[b, j] = dhp[b, j]


def gru_forward(ax, mask, u, h0):
    T, B, H3 = ax.shape
    H = H3 // 3
    dt = ax.dtype
    ax = np.ascontiguousarray(ax)
    mask = np.ascontiguousarray(mask, dtype=dt)
    u = np.ascontiguousarray(u, dtype=dt)
    h0 = np.ascontiguousarray(h0, dtype=dt)
    hs = np.empty((T, B, H), dtype=dt)
    zs = np.empty_like(hs)
    rs = np.empty_like(hs)
    cs = np.empty_like(hs)
    hp = np.empty_like(hs)
    g = np.empty((B, 2 * H), dtype=dt)
    rh = np.empty((B, H), dtype=dt)
    _forward(ax, mask, u, h0, hs, zs, rs, cs, hp, g, rh)
    return hs, (zs, rs, cs, hp)


def gru_backward(dhs, cache, mask, u):
    zs, rs, cs, hp = cache
    T, B, H = dhs.shape
    dt = zs.dtype
    dhs = np.ascontiguousarray(dhs, dtype=dt)
    mask = np.ascontiguousarray(mask, dtype=dt)
    u = np.ascontiguousarray(u, dtype=dt)
    dax = np.empty((T, B, 3 * H), dtype=dt)
    du = np.zeros((3 * H, H), dtype=dt)
    dh = np.zeros((B, H), dtype=dt)
    dhp = np.empty((B, H), dtype=dt)
    rh = np.empty((B, H), dtype=dt)
    _backward(dhs, zs, rs, cs, hp, mask, u, dax, du, dh, dhp, rh)
    return dax, du, dh
