"""Pure numpy fallback for the skipgram kernels.

Same calling convention and update rule as the jitted module: sequential
per-example lazy Adam, duplicate rows folded into a single step.  Kept
vectorized over the embedding dimension so it stays usable without numba.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _adam_rows(table, m, v, steps, rows, grads, lr, beta1, beta2, eps):
    steps[rows] += 1
    t = steps[rows][:, None].astype(np.float64)
    mr = beta1 * m[rows] + (1.0 - beta1) * grads
    vr = beta2 * v[rows] + (1.0 - beta2) * grads * grads
    m[rows] = mr
    v[rows] = vr
    mhat = mr / (1.0 - beta1 ** t)
    vhat = vr / (1.0 - beta2 ** t)
    table[rows] -= lr * mhat / (np.sqrt(vhat) + eps)


def sgns_batch_update(
    comp_flat, comp_off, centers, contexts, negatives,
    in_vec, out_vec,
    m_in, v_in, t_in, m_out, v_out, t_out,
    lr, beta1, beta2, eps,
):
    """Sequential per-example updates; returns the summed example losses."""
    n = centers.shape[0]
    total_loss = 0.0
    for e in range(n):
        comps = comp_flat[comp_off[centers[e]]:comp_off[centers[e] + 1]]
        u = in_vec[comps].sum(axis=0)
        targets = np.empty(negatives.shape[1] + 1, np.int64)
        targets[0] = contexts[e]
        targets[1:] = negatives[e]
        tv = out_vec[targets]
        scores = tv @ u
        sig = _sigmoid(scores)
        coef = sig.copy()
        coef[0] -= 1.0
        # -log sigmoid(s) == softplus(-s) == logaddexp(0, -s)
        total_loss += np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum()
        grad_u = coef @ tv
        uniq, inv = np.unique(targets, return_inverse=True)
        scale = np.bincount(inv, weights=coef)
        _adam_rows(out_vec, m_out, v_out, t_out, uniq, np.outer(scale, u), lr, beta1, beta2, eps)
        ucomp, cinv = np.unique(comps, return_inverse=True)
        mult = np.bincount(cinv).astype(np.float64)
        _adam_rows(in_vec, m_in, v_in, t_in, ucomp, np.outer(mult, grad_u), lr, beta1, beta2, eps)
    return total_loss


def sgns_batch_update_hogwild(*args):
    """No thread pool here: the fallback simply runs sequentially."""
    return sgns_batch_update(*args)
