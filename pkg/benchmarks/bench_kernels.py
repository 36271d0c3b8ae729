"""Compiled kernels vs the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--n-normal 200000] [--n-assign 200 500]

Reports the best-of-N wall time per kernel and checks that both backends
return identical results.
"""
import argparse
import time

import numpy as np

from wganlab import _fallback
from wganlab.numerics import Rng
from wganlab.transport import pairwise_distances

try:
    from wganlab import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def state_for(seed):
    return np.array(Rng(seed).get_state()[1], dtype=np.uint64)


def bench_rng(backend, kind, n, repeat):
    fill = getattr(backend, f"fill_{kind}")
    return best_of(lambda: fill(state_for(1), n), repeat)


def bench_assignment(backend, n, repeat):
    g = Rng(2)
    cost = np.ascontiguousarray(pairwise_distances(g.uniform(2 * n).reshape(n, 2), g.uniform(2 * n).reshape(n, 2)))
    return best_of(lambda: backend.solve_assignment(cost), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n-normal", type=int, default=200_000)
    ap.add_argument("--n-assign", type=int, nargs="+", default=[200, 500])
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")

    rows = []
    for kind in ("uniform", "normal"):
        tc, a = bench_rng(_kernels, kind, args.n_normal, args.repeat)
        tf, b = bench_rng(_fallback, kind, args.n_normal, args.repeat)
        rows.append((f"fill_{kind} n={args.n_normal}", tc, tf, np.array_equal(a, b)))
    for n in args.n_assign:
        tc, a = bench_assignment(_kernels, n, args.repeat)
        tf, b = bench_assignment(_fallback, n, args.repeat)
        rows.append((f"assignment {n}x{n}", tc, tf, np.array_equal(a[0], b[0])))

    print(f"{'kernel':<28}{'compiled [s]':>14}{'fallback [s]':>14}{'speedup':>10}  identical")
    for name, tc, tf, same in rows:
        print(f"{name:<28}{tc:>14.4f}{tf:>14.4f}{tf / tc:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
