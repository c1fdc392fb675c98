"""Compare the compiled reduction kernels against their NumPy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Times strict_dot, strict_sqdist and strict_accumulate on parameter
vectors of several sizes (the 23,860-entry row is the 784-30-10 MLP)
and prints one table per kernel. Both backends produce bitwise equal
results; this script is only about speed.
"""

import argparse
import time

import numpy as np

from fedwatch import _kernels_py
from fedwatch.vectorops import backend_name

try:
    from fedwatch import _kernels
except ImportError:
    _kernels = None

SIZES = (310, 4096, 23860, 262144)


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(name, make_call, repeats):
    print(f"\n{name}")
    print(f"{'size':>8} {'numpy twin':>12} {'compiled':>12} {'speedup':>8}")
    for size in SIZES:
        rng = np.random.default_rng(size)
        a = rng.normal(size=size)
        b = rng.normal(size=size)
        py = best_of(make_call(_kernels_py, a, b), repeats)
        if _kernels is None:
            print(f"{size:>8} {py * 1e6:>10.1f}us {'n/a':>12} {'n/a':>8}")
            continue
        cy = best_of(make_call(_kernels, a, b), repeats)
        print(f"{size:>8} {py * 1e6:>10.1f}us {cy * 1e6:>10.1f}us "
              f"{py / cy:>7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"active backend: {backend_name()}")
    if _kernels is None:
        print("compiled kernels unavailable; timing the fallback only")

    bench("strict_dot", lambda mod, a, b: (lambda: mod.strict_dot(a, b)),
          args.repeats)
    bench("strict_sqdist",
          lambda mod, a, b: (lambda: mod.strict_sqdist(a, b)),
          args.repeats)

    def accumulate_call(mod, a, b):
        out = a.copy()
        return lambda: mod.strict_accumulate(out, 0.05, b)

    bench("strict_accumulate", accumulate_call, args.repeats)


if __name__ == "__main__":
    main()
