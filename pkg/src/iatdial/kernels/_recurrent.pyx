# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent-cell kernels.

Same contracts as iatdial.kernels.reference; the time-step loops run in C.
Supports float32 and float64 via fused memoryviews.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh


ctypedef fused real:
    float
    double


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def gru_forward(real[:, ::1] wh, real[:, ::1] xg, real[::1] h0):
    """See iatdial.kernels.reference.gru_forward."""
    cdef Py_ssize_t T = xg.shape[0]
    cdef Py_ssize_t H = h0.shape[0]
    cdef Py_ssize_t t, i, j
    cdef real hv, z, r, c

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    hs_arr = np.empty((T + 1, H), dtype=dtype)
    zrc_arr = np.empty((T, 3 * H), dtype=dtype)
    hc_arr = np.empty((T, H), dtype=dtype)
    hh_arr = np.empty(3 * H, dtype=dtype)

    cdef real[:, ::1] hs = hs_arr
    cdef real[:, ::1] zrc = zrc_arr
    cdef real[:, ::1] hc = hc_arr
    cdef real[::1] hh = hh_arr

    with nogil:
        for i in range(H):
            hs[0, i] = h0[i]
        for t in range(T):
            for j in range(3 * H):
                hh[j] = 0.0
            for i in range(H):
                hv = hs[t, i]
                for j in range(3 * H):
                    hh[j] = hh[j] + hv * wh[i, j]
            for i in range(H):
                z = <real> _sigmoid(<double> (xg[t, i] + hh[i]))
                r = <real> _sigmoid(<double> (xg[t, H + i] + hh[H + i]))
                c = <real> tanh(<double> (xg[t, 2 * H + i] + r * hh[2 * H + i]))
                hs[t + 1, i] = (1.0 - z) * hs[t, i] + z * c
                zrc[t, i] = z
                zrc[t, H + i] = r
                zrc[t, 2 * H + i] = c
                hc[t, i] = hh[2 * H + i]
    return hs_arr, zrc_arr, hc_arr


def gru_backward(real[:, ::1] wh, real[:, ::1] hs, real[:, ::1] zrc,
                 real[:, ::1] hc, real[:, ::1] dh):
    """See iatdial.kernels.reference.gru_backward."""
    cdef Py_ssize_t T = dh.shape[0]
    cdef Py_ssize_t H = dh.shape[1]
    cdef Py_ssize_t t, i, j
    cdef real dht, z, r, c, dz, dc_pre, dr, gv

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64
    dwh_arr = np.zeros((H, 3 * H), dtype=dtype)
    dxg_arr = np.empty((T, 3 * H), dtype=dtype)
    dh_next_arr = np.zeros(H, dtype=dtype)
    g_arr = np.empty(3 * H, dtype=dtype)

    cdef real[:, ::1] dwh = dwh_arr
    cdef real[:, ::1] dxg = dxg_arr
    cdef real[::1] dh_next = dh_next_arr
    cdef real[::1] g = g_arr

    with nogil:
        for t in range(T - 1, -1, -1):
            for i in range(H):
                dht = dh[t, i] + dh_next[i]
                z = zrc[t, i]
                r = zrc[t, H + i]
                c = zrc[t, 2 * H + i]
                dz = dht * (c - hs[t, i])
                dc_pre = (dht * z) * (1.0 - c * c)
                dr = dc_pre * hc[t, i]
                g[i] = dz * z * (1.0 - z)
                g[H + i] = dr * r * (1.0 - r)
                g[2 * H + i] = dc_pre * r
                dxg[t, i] = g[i]
                dxg[t, H + i] = g[H + i]
                dxg[t, 2 * H + i] = dc_pre
                # stash the additive part of dh_prev; the matmul part follows
                dh_next[i] = dht * (1.0 - z)
            for i in range(H):
                gv = 0.0
                for j in range(3 * H):
                    gv = gv + g[j] * wh[i, j]
                    dwh[i, j] = dwh[i, j] + hs[t, i] * g[j]
                dh_next[i] = dh_next[i] + gv
    return dwh_arr, dxg_arr, dh_next_arr
