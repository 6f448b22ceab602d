"""Time the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--number 20]
"""

import argparse
import timeit

import numpy as np

from specwn._kernels import _pykernels

try:
    from specwn._kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    N, M = 1024, 257
    expa = np.exp(-0.01 * rng.random((N, M)) + 0.01j * rng.standard_normal((N, M)))
    kicks = rng.standard_normal((N, M)) + 0j
    P = np.cumsum(rng.standard_normal((N, M)), axis=0)
    incr = rng.standard_normal((2000, 2048))
    # hitting time of level 1 by a Brownian path on 1024 steps, as used per path
    B = np.concatenate([[0.0], np.cumsum(rng.standard_normal(1024) / 32.0)])
    return {
        "propagate": lambda k: k.propagate(expa, kicks, np.ones(M, dtype=complex)),
        "running_extrema": lambda k: k.running_extrema(P),
        "sup_abs_cumsum": lambda k: k.sup_abs_cumsum(incr),
        "first_passage": lambda k: k.first_passage(B, 1.0, 1024),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=args.number, repeat=args.repeat))
        if _ckernels is None:
            print(f"{name:<18}{1e3 * tp / args.number:>14.4f}{'n/a':>14}{'n/a':>10}")
            continue
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=args.number, repeat=args.repeat))
        print(f"{name:<18}{1e3 * tp / args.number:>14.4f}{1e3 * tc / args.number:>14.4f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
