"""Numba kernels against their numpy twins.

Run with ``python benchmarks/bench_kernels.py``.  Each case is warmed up once
(so numba compile time is excluded) and then timed as the best of several
repeats.  The two paths must agree before anything is timed.
"""

import argparse
import time

import numpy as np

from tariffdesign import kernels
from tariffdesign._jit import HAVE_NUMBA


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def rollout_case(n, batch, rng):
    drives = rng.normal(0, 1, (batch, n))

    def run(f):
        return lambda: [f(0.63, 24.0, d) for d in drives]

    return run


def tableau_case(m, n, rng):
    A = np.hstack([rng.uniform(-1, 3, (m, n)), np.eye(m)])
    b = rng.uniform(1, 5, m)
    c = np.concatenate([rng.uniform(-4, 2, n), np.zeros(m)])
    T = np.zeros((m + 1, n + m + 1))
    T[:m, : n + m], T[:m, -1], T[m, : n + m] = A, b, c
    basis = np.arange(n, n + m, dtype=np.int64)
    allowed = np.ones(n + m, dtype=np.bool_)

    def run(f):
        def go():
            f(T.copy(), basis.copy(), allowed, 50_000, 1e-9, 1e-9, 50)
        return go

    return run, T, basis, allowed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<16}{'size':>14}{'numpy [ms]':>14}{'numba [ms]':>14}{'speedup':>10}")
    for n in (24, 96, 384):
        run = rollout_case(n, 200, rng)
        d = rng.normal(0, 1, n)
        assert np.allclose(kernels.affine_rollout_numpy(0.63, 24.0, d), kernels._affine_rollout_nb(0.63, 24.0, d))
        run(kernels._affine_rollout_nb)()
        t_np = best_of(run(kernels.affine_rollout_numpy), args.repeats)
        t_nb = best_of(run(kernels._affine_rollout_nb), args.repeats)
        print(f"{'affine_rollout':<16}{f'200 x {n}':>14}{1e3 * t_np:>14.2f}{1e3 * t_nb:>14.2f}{t_np / t_nb:>9.1f}x")

    for m, n in ((20, 40), (60, 120), (150, 300)):
        run, T, basis, allowed = tableau_case(m, n, rng)
        T1, T2 = T.copy(), T.copy()
        s1 = kernels.simplex_loop_numpy(T1, basis.copy(), allowed, 50_000, 1e-9, 1e-9, 50)
        s2 = kernels._simplex_loop_nb(T2, basis.copy(), allowed, 50_000, 1e-9, 1e-9, 50)
        assert int(s1[0]) == int(s2[0]) and np.allclose(T1, T2, atol=1e-7)
        t_np = best_of(run(kernels.simplex_loop_numpy), args.repeats)
        t_nb = best_of(run(kernels._simplex_loop_nb), args.repeats)
        print(f"{'simplex_loop':<16}{f'{m} x {n + m}':>14}{1e3 * t_np:>14.2f}{1e3 * t_nb:>14.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
