"""Compare the compiled and numpy kernels on grid-sized inputs.

    python3 benchmarks/bench_kernels.py [--n 32 64] [--repeat 5] [--threads 1 4]
"""
import argparse
import math
import timeit

import numpy as np

from chlab import _kernels


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(n, n, n, 9))
    M = rng.normal(size=(n ** 3, 3, 3))
    G = M @ np.swapaxes(M, -1, -2) + np.eye(3)
    T = rng.normal(size=(n ** 3, 3, 3))
    return f, G, T + np.swapaxes(T, -1, -2)


def bench(n, repeat, threads):
    f, G, T = _inputs(n)
    h = 2 * math.pi / n
    rows = []
    for impl in _kernels.available():
        for nt in (threads if impl == "cython" else [1]):
            _kernels.set_threads(nt)
            grad = min(timeit.repeat(lambda: _kernels.periodic_gradient(f, h, 4, impl=impl),
                                     number=1, repeat=repeat))
            terms = min(timeit.repeat(lambda: _kernels.torsion_energy_terms(G, T, impl=impl),
                                      number=1, repeat=repeat))
            rows.append((impl, nt, grad, terms))
    _kernels.set_threads(1)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args()
    print(f"{'n':>4} {'impl':>7} {'threads':>7} {'gradient [ms]':>14} {'energy terms [ms]':>18}")
    for n in args.n:
        rows = bench(n, args.repeat, args.threads)
        base = {r[0]: r for r in rows if r[1] == 1}
        for impl, nt, g, t in rows:
            print(f"{n:>4} {impl:>7} {nt:>7} {1e3 * g:>14.2f} {1e3 * t:>18.2f}")
        if "cython" in base:
            py, cy = base["python"], base["cython"]
            print(f"{'':>4} speedup (1 thread): gradient {py[2] / cy[2]:.1f}x, "
                  f"energy terms {py[3] / cy[3]:.1f}x")


if __name__ == "__main__":
    main()
