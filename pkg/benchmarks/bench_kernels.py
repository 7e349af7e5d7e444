"""Benchmark the jit-compiled kernels against their pure-numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Set ``CURATE_NO_NUMBA=1`` to
confirm the package still imports and runs on the numpy path alone (the
numba column then reports n/a).
"""

import time

import numpy as np

from spatialcurate import _kernels


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def check_agreement(a, b, label):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            assert np.allclose(x, y, atol=1e-9), f"{label}: paths disagree"
    else:
        assert np.allclose(a, b, atol=1e-9), f"{label}: paths disagree"


def main():
    rng = np.random.default_rng(0)
    cases = []

    depth = rng.uniform(0.1, 40.0, size=(512, 640))
    depth[rng.random(size=depth.shape) < 0.1] = 0.0
    cases.append(("block_stats 512x640", _kernels.block_stats_numpy,
                  _kernels.block_stats_numba, (depth, 8)))

    n = 200_000
    xs = rng.uniform(-50, 50, n)
    ys = rng.uniform(-50, 50, n)
    zs = rng.uniform(-5, 7, n)
    cases.append(("bin_objects 200k", _kernels.bin_objects_numpy,
                  _kernels.bin_objects_numba,
                  (xs, ys, zs, -40.0, 40.0, -40.0, 40.0, -3.0, 5.0, 8, 8, 4)))

    grid = rng.normal(size=(2, 64, 37, 37))
    cases.append(("bilinear 37x37->80x80", _kernels.bilinear_numpy,
                  _kernels.bilinear_numba, (grid, 80, 80)))

    print(f"numba enabled: {_kernels.NUMBA_ENABLED}")
    header = f"{'kernel':<24} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, numpy_fn, numba_fn, args in cases:
        t_np = timeit(numpy_fn, *args)
        if numba_fn is not None:
            numba_fn(*args)  # compile outside the timing loop
            t_nb = timeit(numba_fn, *args)
            check_agreement(numpy_fn(*args), numba_fn(*args), label)
            print(f"{label:<24} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} {t_np / t_nb:>8.1f}x")
        else:
            print(f"{label:<24} {t_np * 1e3:>12.2f} {'n/a':>12} {'n/a':>9}")


if __name__ == "__main__":
    main()
