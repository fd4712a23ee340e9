"""Timing comparison of the numba kernels against their numpy fallbacks.

Run from the repository root::

    python benchmarks/bench_backends.py [--repeats 5]

The selected backend (``BDLS_BACKEND``) does not matter here: both twins
of every kernel are imported and timed directly.
"""

import argparse
import time

import numpy as np

from bdls import _kernels as K


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kde(repeats):
    rng = np.random.default_rng(0)
    pos = rng.standard_normal((4000, 2))
    periods = np.zeros(2)
    args = (pos, periods, 1.0 / (2 * 0.09), (2 * np.pi * 0.09) ** -1 / 4000)
    rows = []
    if K._kde_all_numba is not None:
        K._kde_all_numba(pos[:8], *args[1:])  # compile
        rows.append(("kde_all (N=4000, d=2)", "numba",
                     best_of(lambda: K._kde_all_numba(*args), repeats)))
    rows.append(("kde_all (N=4000, d=2)", "numpy",
                 best_of(lambda: K._kde_all_numpy(*args), repeats)))
    return rows


def bench_bd_sweep(repeats):
    rng = np.random.default_rng(1)
    n = 100_000
    centered = rng.standard_normal(n)
    u_event, u_partner = rng.random(n), rng.random(n)
    rows = []

    def run(fn):
        pos = rng.standard_normal((n, 2))
        killed = np.empty(n, np.int64)
        dup = np.empty(n, np.int64)
        rate = np.empty(n)
        fn(pos, centered, 0.2, u_event, u_partner, killed, dup, rate)

    if K._bd_sweep_numba is not None:
        run(K._bd_sweep_numba)  # compile
        rows.append(("bd_sweep (N=1e5)", "numba",
                     best_of(lambda: run(K._bd_sweep_numba), repeats)))
    rows.append(("bd_sweep (N=1e5)", "numpy",
                 best_of(lambda: run(K._bd_sweep_numpy), repeats)))
    return rows


def bench_bgmm(repeats):
    rng = np.random.default_rng(2)
    y = rng.normal(1.0, 3.0, 200)
    x = np.column_stack([
        rng.uniform(0.1, 0.4, 2000), rng.uniform(0.1, 0.4, 2000),
        rng.uniform(-6, 7, (2000, 3)).reshape(2000, 3),
        rng.uniform(0.5, 2.5, (2000, 3)).reshape(2000, 3),
        rng.uniform(0.5, 1.5, 2000)[:, None],
    ])
    args = (x, y, 0.5, 0.02, 2.0, 0.02, 0.005)
    rows = []
    if K._bgmm_numba is not None:
        K._bgmm_numba(x[:4], *args[1:])  # compile
        rows.append(("posterior batch (N=2000, n=200)", "numba",
                     best_of(lambda: K._bgmm_numba(*args), repeats)))
    rows.append(("posterior batch (N=2000, n=200)", "numpy",
                 best_of(lambda: K._bgmm_numpy(*args), repeats)))
    return rows


def bench_tridiag(repeats):
    rng = np.random.default_rng(3)
    n = 500
    sub = rng.random(n) + 0.5
    sup = rng.random(n) + 0.5
    diag = 4.0 + rng.random(n)
    b = rng.standard_normal(n)
    rows = []

    def run(fn):
        for _ in range(200):
            fn(sub, diag, sup, b)

    if K.NUMBA_ENABLED:
        K._thomas_numba(sub, diag, sup, b)  # compile
        rows.append(("tridiag solve x200 (n=500)", "numba",
                     best_of(lambda: run(K._thomas_numba), repeats)))
    rows.append(("tridiag solve x200 (n=500)", "numpy",
                 best_of(lambda: run(K._thomas_numpy), repeats)))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rows = []
    rows += bench_kde(args.repeats)
    rows += bench_bd_sweep(args.repeats)
    rows += bench_bgmm(args.repeats)
    rows += bench_tridiag(args.repeats)

    print(f"{'kernel':38s} {'backend':8s} {'best time':>12s}")
    by_kernel = {}
    for name, backend, t in rows:
        print(f"{name:38s} {backend:8s} {t * 1e3:>10.2f}ms")
        by_kernel.setdefault(name, {})[backend] = t
    print()
    for name, d in by_kernel.items():
        if "numba" in d and "numpy" in d:
            print(f"{name}: numba is {d['numpy'] / d['numba']:.1f}x faster")


if __name__ == "__main__":
    main()
