"""Compare compiled and NumPy particle kernels.

    python benchmarks/bench_kernels.py [--sizes 500 2000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from kinpara import _pykernels

try:
    from kinpara import _ckernels
except ImportError:
    _ckernels = None


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000])
    ap.add_argument("--modes", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    a = rng.standard_normal(args.modes) / np.arange(1, args.modes + 1)
    b = rng.standard_normal(args.modes) / np.arange(1, args.modes + 1)
    b[0] = 0.0
    W = rng.standard_normal((64, 128))
    print(f"{'kernel':<18}{'N':>8}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max diff':>12}")
    for n in args.sizes:
        X = rng.uniform(-np.pi, np.pi, n)
        V = rng.uniform(-3, 3, n)
        cases = [
            ("pair_force", lambda m: m.pair_force(X, a, b, 1.0)),
            ("bilinear_periodic", lambda m: m.bilinear_periodic(W, -np.pi, 2 * np.pi / 64, -4.0, 8.0 / 128, X, V)),
        ]
        for name, call in cases:
            tp = bench(lambda: call(_pykernels), args.repeat)
            if _ckernels is None:
                print(f"{name:<18}{n:>8}{tp:>12.4g}{'n/a':>12}{'':>10}{'':>12}")
                continue
            tc = bench(lambda: call(_ckernels), args.repeat)
            diff = float(np.max(np.abs(call(_pykernels) - call(_ckernels))))
            print(f"{name:<18}{n:>8}{tp:>12.4g}{tc:>12.4g}{tp / tc:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
