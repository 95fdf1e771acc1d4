#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

The two hot kernels are the per-window gravity adjacency average (O(W * N^2))
and the three variance views (O(M * p * N * k)); both run once per training
sample, so their cost dominates dataset preparation as the region count grows.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from stua._kernels import BACKEND, pykern

try:
    from stua._kernels import _ckern
except ImportError:
    _ckern = None


def time_call(fn, *args, repeats=5):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_gravity(repeats):
    print("\ngravity_window_mean (window W = 48 intervals)")
    print(f"{'N':>6} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>9}")
    rng = np.random.default_rng(0)
    for n in (16, 64, 256, 512):
        coords = rng.uniform(0, 30, (n, 2))
        diff = coords[:, None] - coords[None]
        dist = np.sqrt((diff**2).sum(-1))
        dist[np.diag_indices(n)] = 0.0
        flows = rng.uniform(0, 200, (48, n))
        t_np = time_call(pykern.gravity_window_mean, dist, flows, 0.6, 1.0, repeats=repeats)
        if _ckern is None:
            print(f"{n:>6} {t_np*1e3:>12.3f} {'-':>12} {'-':>9}")
            continue
        t_cy = time_call(_ckern.gravity_window_mean, dist, flows, 0.6, 1.0, repeats=repeats)
        a = pykern.gravity_window_mean(dist, flows, 0.6, 1.0)
        b = _ckern.gravity_window_mean(dist, flows, 0.6, 1.0)
        assert np.allclose(a, b, atol=1e-10)
        print(f"{n:>6} {t_np*1e3:>12.3f} {t_cy*1e3:>12.3f} {t_np/t_cy:>8.1f}x")


def bench_variance(repeats):
    print("\nvariance_views_fields (M = 5 periods, p = 6 slots)")
    print(f"{'N':>6} {'k':>4} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>9}")
    rng = np.random.default_rng(1)
    for n in (16, 64, 256, 1024):
        k = max(1, math.ceil(0.05 * n))
        values = rng.uniform(0, 100, (5, 6, n))
        neighbors = np.stack([
            rng.choice([j for j in range(n) if j != i], k, replace=False)
            for i in range(n)]).astype(np.int64)
        t_np = time_call(pykern.variance_views_fields, values, neighbors, repeats=repeats)
        if _ckern is None:
            print(f"{n:>6} {k:>4} {t_np*1e3:>12.3f} {'-':>12} {'-':>9}")
            continue
        t_cy = time_call(_ckern.variance_views_fields, values, neighbors, repeats=repeats)
        for x, y in zip(pykern.variance_views_fields(values, neighbors),
                        _ckern.variance_views_fields(values, neighbors)):
            assert np.allclose(x, y, atol=1e-10)
        print(f"{n:>6} {k:>4} {t_np*1e3:>12.3f} {t_cy*1e3:>12.3f} {t_np/t_cy:>8.1f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"active backend: {BACKEND}"
          + ("" if _ckern else "  (compiled extension not built; numpy only)"))
    bench_gravity(args.repeats)
    bench_variance(args.repeats)


if __name__ == "__main__":
    main()
