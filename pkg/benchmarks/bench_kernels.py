"""Time the numba and numpy variants of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--obs 200000] [--stations 642] [--repeat 5]

Numba timings exclude the first (compiling) call. Results of the two variants
are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from edgecloud import kernels
from edgecloud._accel import HAS_NUMBA


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def random_csr(rng, n, avg_deg):
    rows = []
    for _ in range(n):
        k = rng.poisson(avg_deg)
        rows.append(np.unique(rng.integers(0, n, size=k)))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows).astype(np.int64) if rows else np.zeros(0, np.int64)
    weights = rng.integers(1, 50, size=indices.size).astype(np.float64)
    return indptr, indices, weights


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--obs", type=int, default=200_000)
    ap.add_argument("--stations", type=int, default=642)
    ap.add_argument("--graph-nodes", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba unavailable (or EDGECLOUD_NO_NUMBA set); nothing to compare")

    rng = np.random.default_rng(args.seed)
    lat = 46.05 + 0.1 * rng.random(args.obs)
    lon = -64.90 + 0.2 * rng.random(args.obs)
    st_lat = 46.05 + 0.1 * rng.random(args.stations)
    st_lon = -64.90 + 0.2 * rng.random(args.stations)
    csr = random_csr(rng, args.graph_nodes, 6.0)

    cases = [
        (
            "consecutive_distances",
            lambda: kernels.consecutive_distances_np(lat, lon),
            lambda: kernels.consecutive_distances_nb(lat, lon),
        ),
        (
            "radius_join (30 m)",
            lambda: kernels.radius_join_np(lat, lon, st_lat, st_lon, 30.0),
            lambda: kernels.radius_join_nb(lat, lon, st_lat, st_lon, 30.0),
        ),
        (
            "pagerank_csr",
            lambda: kernels.pagerank_csr_np(*csr, 0.85, 1e-8, 100),
            lambda: kernels.pagerank_csr_nb(*csr, 0.85, 1e-8, 100),
        ),
    ]
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, f_np, f_nb in cases:
        a, b = f_np(), f_nb()  # also compiles the numba variant
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        for x, y in zip(a, b):
            np.testing.assert_allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=1e-9, atol=1e-12)
        t_np = best_of(f_np, args.repeat)
        t_nb = best_of(f_nb, args.repeat)
        print(f"{name:<24}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
