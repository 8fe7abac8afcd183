"""Time the compiled kernels against the numpy fallback on identical inputs.

    python3 benchmarks/bench_backends.py [--n 100000] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from pdmpjump import _pycore

try:
    from pdmpjump import _core
except ImportError:  # extension not built
    _core = None


def _cases(n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential(n)
    z, zm, s = _pycore.tcp_chain(1.0, 0.4, e)
    order = np.argsort(z[:-1], kind="stable")
    z_sorted, s_by_z = z[:-1][order], s[order]
    centers = np.round(np.arange(0.5, 2.51, 0.05), 10)
    hts = np.round(np.arange(0.05, 1.51, 0.05), 10)
    xi_grid = np.round(np.arange(0.01, 2.5, 0.01), 10)
    return {
        "tcp_chain": lambda m: m.tcp_chain(1.0, 0.4, e),
        "epan_sums": lambda m: m.epan_sums(np.sort(zm), centers, 0.1),
        "lcp_sums": lambda m: [m.lcp_sums(z_sorted, s_by_z, 0.8, 0.5, 0.1, hts) for _ in range(100)],
        "amg_criterion": lambda m: m.amg_criterion(z_sorted, s_by_z, centers, xi_grid, 0.1),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _core is None:
        print("compiled extension not available; only the numpy backend is timed")
    print(f"{'kernel':<15}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, fn in _cases(args.n, args.seed).items():
        t_py = min(timeit.repeat(lambda: fn(_pycore), number=1, repeat=args.repeat))
        if _core is None:
            print(f"{name:<15}{t_py:>12.4f}{'-':>12}{'-':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        print(f"{name:<15}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
