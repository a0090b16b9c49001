"""Compare the numba and numpy backends of the hot kernels.

    python benchmarks/bench_kernels.py [--points N] [--degree P] [--repeat R]

Prints best-of-R wall time per backend and the max difference between them.
"""
import argparse
import time

import numpy as np

from cutprep import _kernels as K
from cutprep.bg_mesh import _open_knots


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_bspline(n_points, p, repeat, rng):
    n_el = 64
    knots = _open_knots(n_el, p)
    spans = rng.integers(0, n_el, n_points) + p
    ts = knots[spans] + rng.random(n_points) * (knots[spans + 1] - knots[spans])
    rows = {}
    for be in ("numpy", "numba") if K.HAVE_NUMBA else ("numpy",):
        K.bspline_ders(knots, p, spans[:2], ts[:2], 2, backend=be)  # compile / warm up
        rows[be] = best_time(lambda: K.bspline_ders(knots, p, spans, ts, 2, backend=be), repeat)
    return rows


def bench_scatter(n_blocks, p, repeat, rng):
    nloc = 2 * (p + 1) ** 2
    n = 4000
    rows = rng.integers(0, n, (n_blocks, nloc))
    Ke = rng.random((n_blocks, nloc, nloc))
    out = {}
    for be in ("numpy", "numba") if K.HAVE_NUMBA else ("numpy",):
        def run():
            A = np.zeros((n, n))
            for r, k in zip(rows, Ke):
                K.scatter_add(A, r, r, k, backend=be)
            return A
        run_small = np.zeros((n, n))
        K.scatter_add(run_small, rows[0], rows[0], Ke[0], backend=be)
        out[be] = best_time(run, repeat)
    return out


def report(name, rows):
    ref = rows["numpy"][1]
    for be, (t, val) in rows.items():
        diff = float(np.max(np.abs(val - ref)))
        print(f"{name:<12} {be:<6} {t * 1e3:10.3f} ms   max|diff vs numpy| {diff:.2e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--blocks", type=int, default=2_000)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {K.HAVE_NUMBA}; default backend: {'numba' if K.USE_NUMBA else 'numpy'}")
    report("bspline", bench_bspline(args.points, args.degree, args.repeat, rng))
    report("scatter", bench_scatter(args.blocks, args.degree, args.repeat, rng))


if __name__ == "__main__":
    main()
