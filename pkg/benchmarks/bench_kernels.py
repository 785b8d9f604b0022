#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

The kNN and scatter kernels are timed in-process (both implementations are
importable side by side); the end-to-end compose is timed in subprocesses so
each run gets the import-time path selection via BEASTFORGE_NO_NUMBA.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from beastforge import kernels


def _time(fn, repeat=5):
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    return best


def bench_knn(quick: bool):
    rng = np.random.default_rng(0)
    l = 20_000 if quick else 100_000
    q = 1500
    k = 8
    targets = rng.uniform(-0.5, 0.5, (l, 3))
    refs = rng.uniform(-0.5, 0.5, (q, 3))
    rows = []
    if kernels.NUMBA_ENABLED:
        idx = np.empty((l, k), dtype=np.int64)
        d2 = np.empty((l, k))
        kernels._knn_loop_jit(targets[:10], refs, k, idx[:10], d2[:10])  # warm up

        def run_jit():
            kernels._knn_loop_jit(targets, refs, k, idx, d2)

        rows.append(("knn_search", "numba", _time(run_jit)))
    rows.append(("knn_search", "numpy", _time(lambda: kernels._knn_numpy(targets, refs, k))))
    return rows


def bench_scatter(quick: bool):
    rng = np.random.default_rng(1)
    m = 200_000 if quick else 800_000
    ncells = 64 ** 3
    c = 8
    cells = np.ascontiguousarray(rng.integers(0, ncells, m))
    w = rng.uniform(0.1, 1.0, m)
    z = rng.normal(size=(m, c))
    rows = []
    if kernels.NUMBA_ENABLED:
        def run_jit():
            count = np.zeros(ncells, dtype=np.int64)
            wsum = np.zeros(ncells)
            zsum = np.zeros((ncells, c))
            zfirst = np.zeros((ncells, c))
            kernels._scatter_loop_jit(cells, w, z, count, wsum, zsum, zfirst)

        run_jit()  # warm up
        rows.append(("scatter_accumulate", "numba", _time(run_jit)))

    def run_numpy():
        np.bincount(cells, minlength=ncells)
        np.bincount(cells, weights=w, minlength=ncells)
        for ch in range(c):
            np.bincount(cells, weights=w * z[:, ch], minlength=ncells)
        zfirst = np.zeros((ncells, c))
        zfirst[cells[::-1]] = z[::-1]

    rows.append(("scatter_accumulate", "numpy", _time(run_numpy)))
    return rows


_COMPOSE_PROG = """
import time
import numpy as np
from beastforge.kernels import NUMBA_ENABLED
from beastforge.planner import AffineTransform, PartRef, Rotate, op_to_affine
from beastforge.voxels import CompositionConfig, RegionLatent, compose

rng = np.random.default_rng(8)
n, half = 64, {half}
lin = rng.choice(n ** 3, size=2 * half, replace=False)
regions = []
for i in range(2):
    ids = np.sort(lin[i * half:(i + 1) * half])
    pos = np.stack([ids // (n * n), (ids // n) % n, ids % n], axis=1)
    regions.append(RegionLatent(ref=f"r{{i}}", resolution=n, positions=pos,
                                features=rng.normal(size=(half, 8)),
                                weights=rng.uniform(0.1, 1.0, half)))
rot = op_to_affine(Rotate(PartRef("a", "body", 1), np.array([0.0, 1.0, 0.0]),
                          np.zeros(3), 30.0))
pairs = [(regions[0], AffineTransform.identity()), (regions[1], rot)]
compose(pairs, CompositionConfig())  # warm up
best = min(
    (lambda t0=time.perf_counter(): (compose(pairs, CompositionConfig()),
                                     time.perf_counter() - t0)[1])()
    for _ in range(3)
)
print(f"{{'numba' if NUMBA_ENABLED else 'numpy'}} {{best:.4f}}")
"""


def bench_compose(quick: bool):
    half = 20_000 if quick else 50_000
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ)
        env["BEASTFORGE_NO_NUMBA"] = disable
        out = subprocess.run([sys.executable, "-c", _COMPOSE_PROG.format(half=half)],
                             capture_output=True, text=True, env=env, check=True)
        path, secs = out.stdout.split()
        rows.append((f"compose ({2 * half} voxels)", path, float(secs)))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()
    rows = []
    rows += bench_knn(args.quick)
    rows += bench_scatter(args.quick)
    rows += bench_compose(args.quick)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  path   best (s)")
    print("-" * (width + 18))
    for name, path, secs in rows:
        print(f"{name:<{width}}  {path:<6} {secs:8.4f}")
    if not kernels.NUMBA_ENABLED:
        print("\nnumba path unavailable (not installed or BEASTFORGE_NO_NUMBA set); "
              "only the numpy fallback was timed in-process.")


if __name__ == "__main__":
    main()
