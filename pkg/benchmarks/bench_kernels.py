"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the two hot loops behind the public API — ``pvar_dp`` (the optimal
partition sweep behind every p-variation seminorm) and ``nfunc_scan``
(the greedy block scan behind the threshold count) — on lifts of sampled
fractional Brownian paths, checks that both backends return identical
values, and prints a timing table.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 64,256,1024]

The package itself selects the compiled backend automatically when it
imported cleanly; ``ROUGHWZ_PURE=1`` forces the fallback at import time.
This script imports both modules side by side, so it needs the compiled
extension to be built (editable install or ``pip install .``).
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from roughwz import lift_piecewise_linear, sample_fbm
from roughwz import _kernels_py
from roughwz.roughpath import _pair_costs

try:
    from roughwz import _kernels
except ImportError:
    _kernels = None


def _lift(m: int, *, dim: int = 2, seed: int = 7):
    path = sample_fbm(0.4, m, 1, seed, dim=dim)[0]
    return lift_piecewise_linear(path, 3)


def _pvar_case(m: int):
    lift = _lift(m)
    costs = np.ascontiguousarray(_pair_costs(lift.running(), 2, 1.5, 0, m))
    return ("pvar_dp", m, lambda mod: mod.pvar_dp(costs))


def _nfunc_case(m: int, beta: float):
    lift = _lift(m)
    r1, r2, r3 = (np.ascontiguousarray(r) for r in lift.running())
    return (f"nfunc_scan beta={beta:g}", m,
            lambda mod: mod.nfunc_scan(r1, r2, r3, 3, 3.0, beta))


def _time(fn, repeat: int) -> float:
    loops = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-9)))
    return min(timeit.repeat(fn, number=loops, repeat=repeat)) / loops


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="timing repetitions per case (min is reported)")
    parser.add_argument("--sizes", default="64,256,1024",
                        help="comma-separated node counts")
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled backend not importable; build the extension first "
              "(pip install -e . --no-build-isolation)", file=sys.stderr)
        return 1

    sizes = [int(s) for s in args.sizes.split(",") if s]
    cases = [_pvar_case(m) for m in sizes]
    cases += [_nfunc_case(m, beta) for m in sizes for beta in (0.25, 1.0)]

    print(f"{'case':<24} {'nodes':>6} {'pure':>12} {'cython':>12} {'speedup':>8}")
    for label, m, run in cases:
        expected = run(_kernels_py)
        got = run(_kernels)
        if isinstance(expected, tuple):
            same = expected[0] == got[0] and list(expected[1]) == list(got[1])
        else:
            same = expected == got
        if not same:
            print(f"backend mismatch on {label} at {m} nodes: "
                  f"{expected!r} vs {got!r}", file=sys.stderr)
            return 1
        t_pure = _time(lambda: run(_kernels_py), args.repeat)
        t_cy = _time(lambda: run(_kernels), args.repeat)
        print(f"{label:<24} {m:>6} {t_pure * 1e3:>10.3f}ms "
              f"{t_cy * 1e3:>10.3f}ms {t_pure / t_cy:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
