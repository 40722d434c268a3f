"""Pure numpy implementation of the recurrent-cell kernels.

The compiled extension (iatdial.kernels._recurrent) implements the same two
functions with identical contracts; see the package __init__ for backend
selection.  Conventions shared by both backends:

Gated recurrent cell, gate blocks ordered (update z, reset r, candidate c),
reset gate applied after the recurrent matmul:

    g   = xg[t] + h_prev @ wh            # [3H]; xg = x @ wx + b precomputed
    z   = sigmoid(g[:H])
    r   = sigmoid(g[H:2H])
    c   = tanh(xg[t, 2H:] + r * (h_prev @ wh)[2H:])
    h_t = (1 - z) * h_prev + z * c

The input-side preactivations ``xg`` are computed by the caller with a
single matrix product so that both backends only own the serial recurrence.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(wh, xg, h0):
    """Run the cell over one sequence.

    wh: [H, 3H] recurrent weights; xg: [T, 3H] input preactivations; h0: [H].

    Returns (hs, zrc, hc) where hs is [T+1, H] with hs[0] = h0, zrc is
    [T, 3H] caching the gate activations (z, r, c) and hc is [T, H] caching
    the candidate block of h_prev @ wh, both needed by gru_backward.
    """
    T = xg.shape[0]
    H = h0.shape[0]
    hs = np.empty((T + 1, H), dtype=h0.dtype)
    zrc = np.empty((T, 3 * H), dtype=h0.dtype)
    hc = np.empty((T, H), dtype=h0.dtype)
    hs[0] = h0
    for t in range(T):
        hh = hs[t] @ wh
        z = _sigmoid(xg[t, :H] + hh[:H])
        r = _sigmoid(xg[t, H:2 * H] + hh[H:2 * H])
        c = np.tanh(xg[t, 2 * H:] + r * hh[2 * H:])
        hs[t + 1] = (1.0 - z) * hs[t] + z * c
        zrc[t, :H] = z
        zrc[t, H:2 * H] = r
        zrc[t, 2 * H:] = c
        hc[t] = hh[2 * H:]
    return hs, zrc, hc


def gru_backward(wh, hs, zrc, hc, dh):
    """Backpropagate through the sequence run by gru_forward.

    dh is [T, H]: the downstream gradient with respect to each output state
    hs[t+1].  Returns (dwh, dxg, dh0).
    """
    T, H = dh.shape
    dwh = np.zeros_like(wh)
    dxg = np.empty((T, 3 * H), dtype=wh.dtype)
    dh_next = np.zeros(H, dtype=wh.dtype)
    for t in range(T - 1, -1, -1):
        dht = dh[t] + dh_next
        z = zrc[t, :H]
        r = zrc[t, H:2 * H]
        c = zrc[t, 2 * H:]
        h_prev = hs[t]
        dz = dht * (c - h_prev)
        dc_pre = (dht * z) * (1.0 - c * c)
        dr = dc_pre * hc[t]
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)
        g = np.concatenate([dz_pre, dr_pre, dc_pre * r])
        dwh += np.outer(h_prev, g)
        dxg[t, :H] = dz_pre
        dxg[t, H:2 * H] = dr_pre
        dxg[t, 2 * H:] = dc_pre
        dh_next = g @ wh.T + dht * (1.0 - z)
    return dwh, dxg, dh_next
