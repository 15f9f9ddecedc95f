"""Compare the numba kernels against the numpy fallbacks.

Runs the skipgram batch update and the recurrent layer forward/backward on
identical inputs through both flavours, reporting wall time, speedup, and
the largest numeric disagreement.  Usage:

    python3 benchmarks/bench_kernels.py [--examples N] [--repeat R]
"""

import argparse
import time

import numpy as np

from chordseg import accel
from chordseg.embeddings import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from chordseg.kernels import lstm_numpy, sgns_numpy

if accel.HAVE_NUMBA:
    from chordseg.kernels import lstm_numba, sgns_numba


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def make_sgns_batch(n_examples, n_vocab=800, n_components=144, dim=10, negatives=20, seed=0):
    rng = np.random.default_rng(seed)
    comp_lists = [rng.integers(0, n_components, size=rng.integers(1, 5))
                  for _ in range(n_vocab)]
    comp_off = np.zeros(n_vocab + 1, dtype=np.int64)
    for i, ids in enumerate(comp_lists):
        comp_off[i + 1] = comp_off[i] + len(ids)
    comp_flat = np.concatenate(comp_lists).astype(np.int64)
    return {
        "comp_flat": comp_flat,
        "comp_off": comp_off,
        "centers": rng.integers(0, n_vocab, size=n_examples).astype(np.int64),
        "contexts": rng.integers(0, n_vocab, size=n_examples).astype(np.int64),
        "negatives": rng.integers(0, n_vocab, size=(n_examples, negatives)).astype(np.int64),
        "in_vec": rng.normal(scale=0.05, size=(n_components, dim)),
        "out_vec": rng.normal(scale=0.05, size=(n_vocab, dim)),
    }


def run_sgns(module, batch):
    state = {k: v.copy() for k, v in batch.items()}
    n_components, dim = state["in_vec"].shape
    n_vocab = state["out_vec"].shape[0]
    loss = module.sgns_batch_update(
        state["comp_flat"], state["comp_off"],
        state["centers"], state["contexts"], state["negatives"],
        state["in_vec"], state["out_vec"],
        np.zeros((n_components, dim)), np.zeros((n_components, dim)),
        np.zeros(n_components, dtype=np.int64),
        np.zeros((n_vocab, dim)), np.zeros((n_vocab, dim)),
        np.zeros(n_vocab, dtype=np.int64),
        0.025, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
    )
    return loss, state["in_vec"], state["out_vec"]


def make_lstm_batch(t_steps=60, batch=32, din=10, hidden=100, seed=0):
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden)
    return {
        "x": rng.normal(size=(t_steps, batch, din)),
        "w": rng.uniform(-bound, bound, size=(din, 4 * hidden)),
        "u": rng.uniform(-bound, bound, size=(hidden, 4 * hidden)),
        "b": rng.uniform(-bound, bound, size=4 * hidden),
        "dh": rng.normal(size=(t_steps, batch, hidden)),
    }


def run_lstm(module, batch):
    fwd = module.lstm_layer_forward(batch["x"], batch["w"], batch["u"], batch["b"])
    dx, dw, du, db = module.lstm_layer_backward(
        batch["dh"], batch["x"], *fwd, batch["w"], batch["u"]
    )
    return fwd[0], dx, dw, du, db


def max_diff(a, b):
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--examples", type=int, default=50_000,
                        help="skipgram examples per batch")
    parser.add_argument("--repeat", type=int, default=3,
                        help="timed repetitions (best of)")
    args = parser.parse_args()

    if not accel.HAVE_NUMBA:
        print("numba is not installed; timing the numpy fallback only")

    sgns_batch = make_sgns_batch(args.examples)
    lstm_batch = make_lstm_batch()

    rows = []
    np_t, np_out = _time(lambda: run_sgns(sgns_numpy, sgns_batch), args.repeat)
    if accel.HAVE_NUMBA:
        run_sgns(sgns_numba, sgns_batch)  # compile before timing
        nb_t, nb_out = _time(lambda: run_sgns(sgns_numba, sgns_batch), args.repeat)
        agree = max(abs(np_out[0] - nb_out[0]) / args.examples,
                    max_diff(np_out[1:], nb_out[1:]))
        rows.append(("skipgram batch", np_t, nb_t, agree))
    else:
        rows.append(("skipgram batch", np_t, None, None))

    np_t, np_out = _time(lambda: run_lstm(lstm_numpy, lstm_batch), args.repeat)
    if accel.HAVE_NUMBA:
        run_lstm(lstm_numba, lstm_batch)
        nb_t, nb_out = _time(lambda: run_lstm(lstm_numba, lstm_batch), args.repeat)
        rows.append(("lstm fwd+bwd", np_t, nb_t, max_diff(np_out, nb_out)))
    else:
        rows.append(("lstm fwd+bwd", np_t, None, None))

    print(f"{'kernel':<16} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max diff':>10}")
    for name, np_t, nb_t, agree in rows:
        if nb_t is None:
            print(f"{name:<16} {np_t * 1e3:>8.1f}ms {'-':>10} {'-':>8} {'-':>10}")
        else:
            print(f"{name:<16} {np_t * 1e3:>8.1f}ms {nb_t * 1e3:>8.1f}ms "
                  f"{np_t / nb_t:>7.1f}x {agree:>10.2e}")


if __name__ == "__main__":
    main()
