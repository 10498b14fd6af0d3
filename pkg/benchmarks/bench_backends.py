#!/usr/bin/env python3
"""Time the pure-Python kernels against the compiled ones.

Usage: python benchmarks/bench_backends.py [--quick]

Each workload runs on a fresh seeded Generator per repetition, so both
backends do identical work on identical draw streams; reported times
are the best of three repetitions.
"""

import argparse
import sys
import time

import numpy as np

from phylocomb._backend import pure
from phylocomb.splitting import SplitLaw

try:
    from phylocomb._backend import _speed as speed
except ImportError:
    sys.exit("compiled backend not built; run: python setup.py build_ext --inplace")


def gen(seed):
    return np.random.Generator(np.random.PCG64(seed))


def best_of(fn, args, repeat=3):
    best = float("inf")
    out = None
    for r in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args, gen(12345))
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    opts = ap.parse_args()
    scale = 10 if opts.quick else 1

    cdf8 = SplitLaw.from_beta(-1.0).cdf_rows(8)
    workloads = [
        ("yule_ranked_codes n=8", "yule_ranked_codes", (8, 200_000 // scale)),
        ("kingman_codes n=8 labelled", "kingman_codes", (8, 120_000 // scale, True)),
        ("gw_leaf_counts p=0.49", "gw_leaf_counts", (0.49, 200, 120_000 // scale)),
        ("gw_conditioned_codes n=8", "gw_conditioned_codes", (8, 0.5, 6_000 // scale, 10**7)),
        ("mbm_codes n=8 beta=-1", "mbm_codes", (8, cdf8, 100_000 // scale, 8)),
        ("cpp_codes birth-death n=6", "cpp_codes", (2, 1.0, 0.5, 2.0, 6, 20_000 // scale, 10**7)),
        ("cpp_tip_counts critical", "cpp_tip_counts", (0, 1.0, 0.0, 4.0, 10_000, 60_000 // scale)),
    ]

    print(f"{'workload':34s} {'pure':>10s} {'compiled':>10s} {'speedup':>9s}")
    for label, fn, args in workloads:
        tp, outp = best_of(getattr(pure, fn), args)
        tc, outc = best_of(getattr(speed, fn), args)
        assert np.array_equal(outp, outc), f"backend mismatch in {fn}"
        print(f"{label:34s} {tp:9.3f}s {tc:9.3f}s {tp / tc:8.1f}x")
    print("outputs verified identical across backends")


if __name__ == "__main__":
    main()
