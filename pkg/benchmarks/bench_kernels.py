"""Compare the compiled and NumPy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--reps 200]

Times the two hot kernels on synthetic batches, then a full swing10 run
on each backend and reports how far apart their framers are.
"""
import argparse
import time

import numpy as np

from dsiso import kernels
from dsiso.harness import parse_config, run_scenario
from dsiso.messaging import CommGraph
from dsiso.scenarios import swing10


def _time(fn, reps):
    fn()
    t = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t) / reps


def kernel_cases(rng, N, n, q):
    Mp = np.abs(rng.normal(size=(N, n, n)))
    Mm = np.abs(rng.normal(size=(N, n, n)))
    W = rng.normal(size=(N, n, q))
    lo = rng.normal(size=(N, n))
    hi = lo + rng.random((N, n))
    c_lo, c_hi = -rng.random((N, n)), rng.random((N, n))
    xi = rng.normal(size=(N, q))
    ptr, src = CommGraph.complete(N).csr()
    return (Mp, Mm, W, lo, hi, c_lo, c_hi, xi), (ptr, src, lo[src], hi[src])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()
    names = sorted(kernels.BACKENDS)
    if "cython" not in names:
        print("compiled backend not built; only the NumPy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'case':<28}" + "".join(f"{b:>14}" for b in names))
    for N, n, q in ((3, 4, 8), (5, 10, 20), (20, 30, 40)):
        fa, ni = kernel_cases(rng, N, n, q)
        row_a, row_n = [], []
        for b in names:
            k = kernels.get_backend(b)
            row_a.append(_time(lambda: k.affine_framer(*fa), args.reps))
            row_n.append(_time(lambda: k.neighborhood_intersect(*ni), args.reps))
        print(f"{f'affine N={N} n={n}':<28}" + "".join(f"{t * 1e6:>12.1f}us" for t in row_a))
        print(f"{f'intersect N={N} n={n}':<28}" + "".join(f"{t * 1e6:>12.1f}us" for t in row_n))

    cfg = parse_config(swing10())
    runs, row = {}, []
    for b in names:
        t = time.perf_counter()
        res = run_scenario(cfg, write=False, backend=b)
        row.append(time.perf_counter() - t)
        runs[b] = res.run
    print(f"{'swing10 end-to-end':<28}" + "".join(f"{t:>13.2f}s" for t in row))
    # summation order differs between backends, so agreement is to rounding
    if len(runs) == 2:
        a, b = runs.values()
        gap = max(np.abs(a.x_lo - b.x_lo).max(), np.abs(a.x_hi - b.x_hi).max(),
                  np.abs(a.d_lo - b.d_lo).max(), np.abs(a.d_hi - b.d_hi).max())
        print(f"max framer difference between backends: {gap:.3g}")


if __name__ == "__main__":
    main()
