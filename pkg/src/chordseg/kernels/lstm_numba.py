"""Numba kernels for one LSTM layer over a padded batch.

Arrays are (T, B, ...) with time outermost.  Gates live in the columns of
the fused weight matrices as four H-wide blocks in the order i, f, g, o:

    z = x_t W + h_{t-1} U + b
    i = sigmoid(z_i)  f = sigmoid(z_f)  g = tanh(z_g)  o = sigmoid(z_o)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Initial h and c are zero.  The backward pass consumes the cached gate
activations and returns gradients for the layer input and parameters.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit(cache=True)
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
        z = np.dot(x[t], w) + np.dot(h_prev, u)
        for bb in range(B):
            for j in range(H):
                iv = _sigmoid(z[bb, j] + b[j])
                fv = _sigmoid(z[bb, H + j] + b[H + j])
                gv = math.tanh(z[bb, 2 * H + j] + b[2 * H + j])
                ov = _sigmoid(z[bb, 3 * H + j] + b[3 * H + j])
                cv = fv * c_prev[bb, j] + iv * gv
                ig[t, bb, j] = iv
                fg[t, bb, j] = fv
                gg[t, bb, j] = gv
                og[t, bb, j] = ov
                cs[t, bb, j] = cv
                h[t, bb, j] = ov * math.tanh(cv)
        h_prev = h[t]
        c_prev = cs[t]
    return h, ig, fg, gg, og, cs


@njit(cache=True)
def lstm_layer_backward(dh_out, x, h, ig, fg, gg, og, cs, w, u):
    """Backpropagate through one layer.

    dh_out carries the loss gradient w.r.t. this layer's h outputs (from the
    projection or the layer above); recurrent contributions are added here.
    Returns (dx, dw, du, db).
    """
    T, B, _ = x.shape
    H = u.shape[0]
    dz = np.empty((T, B, 4 * H))
    dh_rec = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for bb in range(B):
            for j in range(H):
                dh = dh_out[t, bb, j] + dh_rec[bb, j]
                tc = math.tanh(cs[t, bb, j])
                iv = ig[t, bb, j]
                fv = fg[t, bb, j]
                gv = gg[t, bb, j]
                ov = og[t, bb, j]
                dc = dc_next[bb, j] + dh * ov * (1.0 - tc * tc)
                c_prev = cs[t - 1, bb, j] if t > 0 else 0.0
                dz[t, bb, j] = dc * gv * iv * (1.0 - iv)
                dz[t, bb, H + j] = dc * c_prev * fv * (1.0 - fv)
                dz[t, bb, 2 * H + j] = dc * iv * (1.0 - gv * gv)
                dz[t, bb, 3 * H + j] = dh * tc * ov * (1.0 - ov)
                dc_next[bb, j] = dc * fv
        dh_rec = np.dot(dz[t], u.T)
    flat_x = x.reshape(T * B, x.shape[2])
    flat_dz = dz.reshape(T * B, 4 * H)
    dw = np.dot(flat_x.T, flat_dz)
    du = np.zeros((H, H * 4))
    for t in range(1, T):
        du += np.dot(h[t - 1].T, dz[t])
    db = np.zeros(4 * H)
    for t in range(T):
        for bb in range(B):
            for col in range(4 * H):
                db[col] += dz[t, bb, col]
    dx = np.dot(flat_dz, w.T).reshape(T, B, x.shape[2])
    return dx, dw, du, db
