"""Compare the compiled kernels with the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, size) with the best time of each backend and the
speed-up.  Both backends are checked for identical output first.
"""
import argparse
import timeit

import numpy as np

from evimutual import _fallback

try:
    from evimutual import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(rng):
    for size in (32, 64, 128, 256):
        mask = rng.random((size, size)) < 0.02
        yield "edt_sq", f"{size}x{size}", lambda impl, m=mask: impl.edt_sq(m)
    for n in (1_000, 100_000, 1_000_000):
        yield "splitmix_uint64", f"n={n}", lambda impl, n=n: impl.splitmix_uint64(0x1234, 0, n)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<16} {'case':<12} {'cython [ms]':>12} {'python [ms]':>12} {'speed-up':>9}")
    for kernel, case, call in _cases(rng):
        if not np.array_equal(call(_kernels), call(_fallback)):
            raise SystemExit(f"{kernel} {case}: backends disagree")
        number = 3
        best = {}
        for name, impl in (("cython", _kernels), ("python", _fallback)):
            times = timeit.repeat(lambda: call(impl), number=number, repeat=args.repeat)
            best[name] = min(times) / number * 1e3
        print(f"{kernel:<16} {case:<12} {best['cython']:>12.3f} {best['python']:>12.3f} "
              f"{best['python'] / best['cython']:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
