"""Time the compiled kernels against their plain-Python fallbacks.

    python benchmarks/bench_kernels.py [--slots 200000] [--repeat 3]

Both paths receive identical pre-drawn inputs, so the results are also
checked for equality.
"""
import argparse
import time

import numpy as np

from noisyaloha import kernels
from noisyaloha._accel import backend


def finite_inputs(n_users, q, k, slots, seed):
    rng = np.random.default_rng(seed)
    counts = rng.binomial(n_users, q, size=slots).astype(np.int64)
    picks = rng.random(int(counts.sum()))
    noise = rng.random(slots)
    return counts, picks, noise


def run_finite(fn, n_users, k, eps, counts, picks, noise):
    width = k + 1
    last_arr = np.full(n_users, kernels.NEVER, dtype=np.int64)
    last_del = np.full(n_users, kernels.NEVER, dtype=np.int64)
    ring_cnt = np.zeros(width, dtype=np.int64)
    ring_idsum = np.zeros(width, dtype=np.int64)
    ring_users = np.zeros((width, n_users), dtype=np.int64)
    ring_len = np.zeros(width, dtype=np.int64)
    active = np.zeros(2, dtype=np.int64)
    tally = np.zeros(kernels.N_TALLY, dtype=np.int64)
    empty_k, empty_t = np.empty(0, np.int8), np.empty(0, np.int64)
    fn(0, k, eps, True, 0, counts.shape[0], counts, picks, noise,
       last_arr, last_del, ring_cnt, ring_idsum, ring_users, ring_len, active, tally, empty_k, empty_t)
    return tally


def run_poisson(fn, k, eps, counts, noise):
    width = k + 1
    tally = np.zeros(kernels.N_TALLY, dtype=np.int64)
    fn(0, k, eps, 0, counts.shape[0], counts, noise, np.zeros(width, np.int64), np.zeros(width, np.int64),
       np.zeros(2, np.int64), tally, np.empty(0, np.int8), np.empty(0, np.int64))
    return tally


def best_of(repeat, thunk):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = thunk()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if backend() != "numba":
        raise SystemExit("numba is disabled or missing; nothing to compare")

    n_users, q, eps, k = 10, 0.01, 0.4, 7
    counts, picks, noise = finite_inputs(n_users, q, k, args.slots, 1)
    pcounts = np.random.default_rng(2).poisson(0.05, args.slots).astype(np.int64)
    eps_axis, lam_axis = np.linspace(0.01, 0.99, 40), np.linspace(0.01, 0.75, 30)
    caps = np.array([max(64, int(np.ceil(4 / x))) for x in lam_axis], dtype=np.int64)

    cases = {
        "finite_sim_chunk": lambda fn: run_finite(fn, n_users, k, eps, counts, picks, noise),
        "poisson_sim_chunk": lambda fn: run_poisson(fn, k, eps, pcounts, noise),
        "region_scan": lambda fn: fn(eps_axis, lam_axis, caps, 1e-12),
    }
    print(f"{'kernel':<20} {'numba s':>10} {'python s':>10} {'speedup':>9}  equal")
    for name, call in cases.items():
        fast_fn = getattr(kernels, name)
        call(fast_fn)  # compile or load from cache
        t_fast, a = best_of(args.repeat, lambda: call(fast_fn))
        saved = kernels.argmax_k_infinite, kernels.v_infinite_scalar
        if name == "region_scan":
            # the python fallback must not call the compiled helpers either
            kernels.argmax_k_infinite = saved[0].py_func
            kernels.v_infinite_scalar = saved[1].py_func
        try:
            t_slow, b = best_of(1, lambda: call(fast_fn.py_func))
        finally:
            kernels.argmax_k_infinite, kernels.v_infinite_scalar = saved
        print(f"{name:<20} {t_fast:>10.4f} {t_slow:>10.4f} {t_slow / t_fast:>8.0f}x  {np.array_equal(a, b)}")


if __name__ == "__main__":
    main()
