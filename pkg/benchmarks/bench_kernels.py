#!/usr/bin/env python3
"""Time the numba-jitted hot kernels against their pure-numpy twins.

Run after installing the package:

    python benchmarks/bench_kernels.py --sizes 1024 16384 131072 --rank 8

The same selection logic as the library applies: if numba is unavailable the
script reports the numpy path only.  Note the library itself picks the path
once at import from BSESOLVE_PURE_NUMPY.
"""

import argparse
import time

import numpy as np

from bsesolve._kernels import KERNEL_PAIRS


def make_args(name, n, r, rng):
    diag = rng.uniform(0.5, 3.0, n)
    left = rng.standard_normal((n, r))
    right = rng.standard_normal((n, r))
    x = rng.standard_normal(n)
    if name in ("dplr_matvec", "sherman_apply"):
        return (diag, left, right, x)
    n_w = max(1, int(np.sqrt(2 * r * n)))
    perm = rng.permutation(n).astype(np.int64)
    active, tail = perm[:n_w], perm[n_w:]
    block = rng.standard_normal((n_w, n_w))
    if name == "blockdiag_solve":
        return (active, tail, block, rng.uniform(0.2, 2.0, n - n_w), x)
    return (diag, left, active, block, tail, rng.standard_normal(n - n_w), x)


def best_of(fn, args, repeat, inner):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[1024, 8192, 65536, 262144])
    ap.add_argument("--rank", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--inner", type=int, default=50)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    header = f"{'kernel':<18}{'n':>9}{'numpy (us)':>13}{'numba (us)':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, (np_fn, nb_fn) in KERNEL_PAIRS.items():
        for n in args.sizes:
            call_args = make_args(name, n, args.rank, rng)
            if nb_fn is not None:
                nb_fn(*call_args)  # compile before timing
                # summation order differs from BLAS; allow accumulation noise
                np.testing.assert_allclose(
                    nb_fn(*call_args), np_fn(*call_args), rtol=1e-8, atol=1e-8
                )
            t_np = best_of(np_fn, call_args, args.repeat, args.inner)
            if nb_fn is None:
                print(f"{name:<18}{n:>9}{t_np * 1e6:>13.2f}{'n/a':>13}{'':>9}")
                continue
            t_nb = best_of(nb_fn, call_args, args.repeat, args.inner)
            print(
                f"{name:<18}{n:>9}{t_np * 1e6:>13.2f}{t_nb * 1e6:>13.2f}"
                f"{t_np / t_nb:>9.2f}"
            )


if __name__ == "__main__":
    main()
