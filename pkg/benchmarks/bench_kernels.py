"""Compare the compiled and pure-Python kernel-sum backends.

Usage: python benchmarks/bench_kernels.py [--m 2000] [--nq 2000] [--q 3] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from sace import kernel


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=2000, help="training rows")
    ap.add_argument("--nq", type=int, default=2000, help="query rows")
    ap.add_argument("--q", type=int, default=3, help="covariate dimension")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    x = rng.standard_normal((args.m, args.q))
    y = rng.standard_normal((args.m, 2))
    query = rng.standard_normal((args.nq, args.q))
    h = kernel.select_bandwidth(x)

    backends = kernel.available_backends()
    results = {}
    for name in backends:
        for kname in ("gaussian", "epanechnikov"):
            fn = lambda: kernel.kernel_sums(x, y, h, query, kname, backend=name)  # noqa: E731
            fn()
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            results[(name, kname)] = (best, fn())
            print(f"{name:>9} {kname:>12}: {best * 1e3:9.2f} ms")
    if "compiled" in backends:
        for kname in ("gaussian", "epanechnikov"):
            tc, (nc, dc) = results[("compiled", kname)]
            tp, (npy, dp) = results[("python", kname)]
            diff = max(np.max(np.abs(nc - npy)), np.max(np.abs(dc - dp)))
            print(f"{kname}: speedup x{tp / tc:.1f}, max abs difference {diff:.2e}")
    else:
        print("compiled backend not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
