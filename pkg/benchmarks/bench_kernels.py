"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Shapes mirror one simulation replication: 400 training rows smoothed onto
10000 unlabeled rows in two projected dimensions, nearest-neighbour
imputation of 10000 rows in ten dimensions, and compensated Gram sums.
"""
import argparse
import time

import numpy as np

from ease import _pykernels

try:
    from ease import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    train2 = rng.standard_normal((400, 2))
    query2 = rng.standard_normal((10000, 2))
    y = rng.standard_normal(400)
    train10 = rng.standard_normal((500, 10))
    query10 = rng.standard_normal((10000, 10))
    outer = rng.standard_normal((10000, 121))
    cases = {
        "nw_sums gaussian q=2": lambda m: m.nw_sums(train2, y, query2, 0.3, 0, 2),
        "nw_sums gaussian q=4": lambda m: m.nw_sums(train2, y, query2, 0.3, 0, 4),
        "nw_sums epanechnikov": lambda m: m.nw_sums(train2, y, query2, 0.3, 1, 2),
        "nearest_index p=10": lambda m: m.nearest_index(train10, query10),
        "colsum 10000x121": lambda m: m.colsum(outer),
    }
    print(f"{'kernel':<24}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, fn in cases.items():
        tp = best_time(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<24}{tp:>12.4f}{'n/a':>12}{'n/a':>10}")
            continue
        tc = best_time(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
