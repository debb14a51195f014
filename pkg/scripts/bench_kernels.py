#!/usr/bin/env python
"""Benchmark the compiled Gram-matrix kernel against the numpy fallback.

Run after installing the package:

    python scripts/bench_kernels.py [--n 1500] [--dim 128] [--repeats 5]
"""

import argparse
import time

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1500)
    ap.add_argument("--dim", type=int, default=128)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    from hrtfgp import _gram_np
    from hrtfgp.kernels import _NU_CODE

    try:
        from hrtfgp import _gram_cy
        backends = {"cython": _gram_cy.gram, "numpy": _gram_np.gram}
    except ImportError:
        print("compiled extension unavailable; benchmarking numpy only")
        backends = {"numpy": _gram_np.gram}

    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((args.n, args.dim)))
    ell = np.ascontiguousarray(np.exp(rng.standard_normal(args.dim) * 0.3))

    print(f"gram matrix {args.n} x {args.n}, {args.dim} dims, "
          f"best of {args.repeats}")
    reference = {}
    for nu, code in _NU_CODE.items():
        for name, fn in backends.items():
            best = np.inf
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                out = fn(code, x, x, ell)
                best = min(best, time.perf_counter() - t0)
            if nu in reference:
                err = np.max(np.abs(out - reference[nu]))
                agree = f"  max |delta| vs first backend {err:.2e}"
            else:
                reference[nu] = out
                agree = ""
            print(f"  nu={nu:<11s} {name:<7s} {best * 1e3:8.1f} ms{agree}")


if __name__ == "__main__":
    main()
