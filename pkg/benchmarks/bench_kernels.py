#!/usr/bin/env python3
"""Throughput comparison of the accel kernels: numba @njit vs pure numpy.

Runs each kernel on identical inputs through both implementations and prints
a speedup table. The dispatching module picks the jit path automatically when
numba imports (set NBDTSIM_PURE_NUMPY=1 to force the fallback everywhere);
this benchmark calls both implementations explicitly so one run covers both.
"""

import time

import numpy as np

from nbdtsim import accel


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (jit compilation, caches)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_hop_counts(n, pairs):
    rng = np.random.default_rng(7)
    origins = rng.integers(1, n + 1, pairs)
    targets = rng.integers(1, n + 1, pairs)
    rows = []
    t_np = timeit(accel.hop_counts_numpy, origins, targets, n)
    if accel.HAVE_NUMBA:
        t_jit = timeit(accel._hop_counts_jit, origins, targets, n,
                       accel.LEVEL_STARTS, accel.LEVEL_WIDTHS)
        assert np.array_equal(
            accel._hop_counts_jit(origins, targets, n, accel.LEVEL_STARTS,
                                  accel.LEVEL_WIDTHS),
            accel.hop_counts_numpy(origins, targets, n))
    else:
        t_jit = None
    rows.append((f"hop_counts n={n} pairs={pairs}", t_jit, t_np))
    return rows


def bench_batch_geometry(count):
    rng = np.random.default_rng(3)
    ids = rng.integers(2, 60_000, count)
    rows = []
    t_np = timeit(accel.level_of_batch_numpy, ids)
    t_jit = (timeit(accel._level_of_jit, ids, accel.LEVEL_STARTS)
             if accel.HAVE_NUMBA else None)
    rows.append((f"level_of_batch n={count}", t_jit, t_np))
    t_np = timeit(accel.parent_of_batch_numpy, ids)
    t_jit = (timeit(accel._parent_of_jit, ids, accel.LEVEL_STARTS,
                    accel.LEVEL_WIDTHS)
             if accel.HAVE_NUMBA else None)
    rows.append((f"parent_of_batch n={count}", t_jit, t_np))
    return rows


def main():
    print(f"numba available: {accel.HAVE_NUMBA} "
          f"(NBDTSIM_PURE_NUMPY={'1' if accel.FORCE_NUMPY else 'unset'})")
    rows = []
    rows += bench_batch_geometry(1_000_000)
    rows += bench_hop_counts(1000, 1_000_000)
    rows += bench_hop_counts(5000, 1_000_000)
    print(f"{'kernel':<38} {'njit':>10} {'numpy':>10} {'speedup':>9}")
    print("-" * 70)
    for name, t_jit, t_np in rows:
        if t_jit is None:
            print(f"{name:<38} {'n/a':>10} {t_np * 1e3:>8.2f}ms {'':>9}")
        else:
            print(f"{name:<38} {t_jit * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
                  f"{t_np / t_jit:>8.2f}x")


if __name__ == "__main__":
    main()
