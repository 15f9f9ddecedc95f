"""Numba kernels for skipgram training with negative sampling.

One example is (center, context, negatives): the center's embedding is the
sum of its component rows, the loss is

    L = -log sigmoid(u . v_ctx) - sum_n log sigmoid(-u . v_neg)

and every touched row receives a lazy Adam update (per-row step counters,
bias correction from each row's own update count).  Duplicate rows inside
one example have their gradients summed before the single Adam step, so an
update is exactly one optimizer step on L.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit(cache=True, inline="always")
def _softplus(x):
    # log(1 + e^x) without overflow; -log sigmoid(s) == softplus(-s)
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True, inline="always")
def _adam_row(table, m, v, steps, row, scale, direction, lr, beta1, beta2, eps):
    # gradient for the row is scale * direction
    steps[row] += 1
    t = steps[row]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for j in range(table.shape[1]):
        grad = scale * direction[j]
        mj = beta1 * m[row, j] + (1.0 - beta1) * grad
        vj = beta2 * v[row, j] + (1.0 - beta2) * grad * grad
        m[row, j] = mj
        v[row, j] = vj
        table[row, j] -= lr * (mj / bc1) / (math.sqrt(vj / bc2) + eps)


@njit(cache=True)
def sgns_batch_update(
    comp_flat, comp_off, centers, contexts, negatives,
    in_vec, out_vec,
    m_in, v_in, t_in, m_out, v_out, t_out,
    lr, beta1, beta2, eps,
):
    """Sequential per-example updates; returns the summed example losses."""
    n = centers.shape[0]
    k = negatives.shape[1]
    d = in_vec.shape[1]
    u = np.empty(d)
    grad_u = np.empty(d)
    targets = np.empty(k + 1, np.int64)
    coef = np.empty(k + 1)
    total_loss = 0.0
    for e in range(n):
        lo = comp_off[centers[e]]
        hi = comp_off[centers[e] + 1]
        for j in range(d):
            u[j] = 0.0
        for ci in range(lo, hi):
            row = comp_flat[ci]
            for j in range(d):
                u[j] += in_vec[row, j]
        targets[0] = contexts[e]
        for i in range(k):
            targets[i + 1] = negatives[e, i]
        for j in range(d):
            grad_u[j] = 0.0
        loss = 0.0
        for i in range(k + 1):
            row = targets[i]
            s = 0.0
            for j in range(d):
                s += u[j] * out_vec[row, j]
            if i == 0:
                loss += _softplus(-s)
                coef[i] = _sigmoid(s) - 1.0
            else:
                loss += _softplus(s)
                coef[i] = _sigmoid(s)
            for j in range(d):
                grad_u[j] += coef[i] * out_vec[row, j]
        total_loss += loss
        # output rows: fold duplicate targets into one Adam step each
        for i in range(k + 1):
            row = targets[i]
            seen = False
            for p in range(i):
                if targets[p] == row:
                    seen = True
                    break
            if seen:
                continue
            scale = coef[i]
            for p in range(i + 1, k + 1):
                if targets[p] == row:
                    scale += coef[p]
            _adam_row(out_vec, m_out, v_out, t_out, row, scale, u, lr, beta1, beta2, eps)
        # component rows: multiplicity-weighted gradient of u
        for ci in range(lo, hi):
            row = comp_flat[ci]
            seen = False
            for p in range(lo, ci):
                if comp_flat[p] == row:
                    seen = True
                    break
            if seen:
                continue
            mult = 1.0
            for p in range(ci + 1, hi):
                if comp_flat[p] == row:
                    mult += 1.0
            _adam_row(in_vec, m_in, v_in, t_in, row, mult, grad_u, lr, beta1, beta2, eps)
    return total_loss


@njit(cache=True, parallel=True)
def sgns_batch_update_hogwild(
    comp_flat, comp_off, centers, contexts, negatives,
    in_vec, out_vec,
    m_in, v_in, t_in, m_out, v_out, t_out,
    lr, beta1, beta2, eps,
):
    """Lock-free parallel variant: examples are sharded across threads and
    rows are updated without synchronization, so results vary run to run."""
    n = centers.shape[0]
    k = negatives.shape[1]
    d = in_vec.shape[1]
    loss_per_example = np.zeros(n)
    for e in prange(n):
        u = np.zeros(d)
        grad_u = np.zeros(d)
        targets = np.empty(k + 1, np.int64)
        coef = np.empty(k + 1)
        lo = comp_off[centers[e]]
        hi = comp_off[centers[e] + 1]
        for ci in range(lo, hi):
            row = comp_flat[ci]
            for j in range(d):
                u[j] += in_vec[row, j]
        targets[0] = contexts[e]
        for i in range(k):
            targets[i + 1] = negatives[e, i]
        loss = 0.0
        for i in range(k + 1):
            row = targets[i]
            s = 0.0
            for j in range(d):
                s += u[j] * out_vec[row, j]
            if i == 0:
                loss += _softplus(-s)
                coef[i] = _sigmoid(s) - 1.0
            else:
                loss += _softplus(s)
                coef[i] = _sigmoid(s)
            for j in range(d):
                grad_u[j] += coef[i] * out_vec[row, j]
        loss_per_example[e] = loss
        for i in range(k + 1):
            row = targets[i]
            seen = False
            for p in range(i):
                if targets[p] == row:
                    seen = True
                    break
            if seen:
                continue
            scale = coef[i]
            for p in range(i + 1, k + 1):
                if targets[p] == row:
                    scale += coef[p]
            _adam_row(out_vec, m_out, v_out, t_out, row, scale, u, lr, beta1, beta2, eps)
        for ci in range(lo, hi):
            row = comp_flat[ci]
            seen = False
            for p in range(lo, ci):
                if comp_flat[p] == row:
                    seen = True
                    break
            if seen:
                continue
            mult = 1.0
            for p in range(ci + 1, hi):
                if comp_flat[p] == row:
                    mult += 1.0
            _adam_row(in_vec, m_in, v_in, t_in, row, mult, grad_u, lr, beta1, beta2, eps)
    return loss_per_example.sum()
