"""Compare the compiled and pure-Python recurrence kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per call for each backend and the speed-up.
"""
import argparse
import timeit

import numpy as np

from rtlearn import _kernels_py

try:
    from rtlearn import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    for n, k in [(60, 8), (100, 54), (100, 108), (1000, 6)]:
        R = rng.standard_normal((n, k))
        T2 = 0.5 * rng.standard_normal((k, k)) / np.sqrt(k)
        sub = -T2
        diag = np.empty((n, k, k))
        diag[:] = np.eye(k) + T2.T @ T2 + np.outer(R[0], R[0])
        yield f"forward_recursion n={n} k={k}", "forward_recursion", (R, T2, np.zeros(k))
        yield f"block_tridiag_solve n={n} k={k}", "block_tridiag_solve", (diag, sub, R)


def best_time(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36} {'python':>11} {'cython':>11} {'speed-up':>9}")
    for label, name, data in cases(rng):
        py = best_time(getattr(_kernels_py, name), data, args.repeat)
        cy = best_time(getattr(_kernels, name), data, args.repeat)
        assert np.allclose(getattr(_kernels_py, name)(*data), getattr(_kernels, name)(*data), atol=1e-10)
        print(f"{label:<36} {py * 1e3:9.3f}ms {cy * 1e3:9.3f}ms {py / cy:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
