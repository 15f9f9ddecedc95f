"""Pure numpy fallback for the LSTM layer kernels.

Mirrors the jitted module exactly (same equations, gate layout, and return
shapes); elementwise work is vectorized over the batch instead of looped.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_layer_forward(x, w, u, b):
    """Run one layer over (T, B, Din) input.

    Returns (h, i, f, g, o, c), each (T, B, H).
    """
    T, B, _ = x.shape
    H = u.shape[0]
    h = np.empty((T, B, H))
    ig = np.empty((T, B, H))
    fg = np.empty((T, B, H))
    gg = np.empty((T, B, H))
    og = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        z = x[t] @ w + h_prev @ u + b
        iv = _sigmoid(z[:, :H])
        fv = _sigmoid(z[:, H:2 * H])
        gv = np.tanh(z[:, 2 * H:3 * H])
        ov = _sigmoid(z[:, 3 * H:])
        cv = fv * c_prev + iv * gv
        ig[t] = iv
        fg[t] = fv
        gg[t] = gv
        og[t] = ov
        cs[t] = cv
        h[t] = ov * np.tanh(cv)
        h_prev = h[t]
        c_prev = cv
    return h, ig, fg, gg, og, cs


def lstm_layer_backward(dh_out, x, h, ig, fg, gg, og, cs, w, u):
    """Backpropagate through one layer; returns (dx, dw, du, db)."""
    T, B, _ = x.shape
    H = u.shape[0]
    dz = np.empty((T, B, 4 * H))
    dh_rec = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_rec
        tc = np.tanh(cs[t])
        dc = dc_next + dh * og[t] * (1.0 - tc * tc)
        c_prev = cs[t - 1] if t > 0 else np.zeros((B, H))
        dz[t, :, :H] = dc * gg[t] * ig[t] * (1.0 - ig[t])
        dz[t, :, H:2 * H] = dc * c_prev * fg[t] * (1.0 - fg[t])
        dz[t, :, 2 * H:3 * H] = dc * ig[t] * (1.0 - gg[t] * gg[t])
        dz[t, :, 3 * H:] = dh * tc * og[t] * (1.0 - og[t])
        dc_next = dc * fg[t]
        dh_rec = dz[t] @ u.T
    flat_x = x.reshape(T * B, x.shape[2])
    flat_dz = dz.reshape(T * B, 4 * H)
    dw = flat_x.T @ flat_dz
    du = np.zeros((H, 4 * H))
    for t in range(1, T):
        du += h[t - 1].T @ dz[t]
    db = flat_dz.sum(axis=0)
    dx = (flat_dz @ w.T).reshape(T, B, x.shape[2])
    return dx, dw, du, db
