"""Hot numeric kernels, each with a numba JIT path and a pure-numpy fallback.

The active path is chosen at import time: numba when importable, unless the
environment variable BEASTFORGE_NO_NUMBA is set to anything other than "" or
"0". Both paths implement the same arithmetic in the same order (no fast-math,
no reassociation), so their outputs are bitwise identical; tests assert this.

Accumulation order is part of every kernel's contract: contributions are
applied left-to-right in input order. The voxel composer's bit-exact
determinism rests on that ordering, so do not swap sequential accumulators
for pairwise reductions here.

``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "knn_search",
    "scatter_accumulate",
    "weighted_bincount",
    "affine_apply",
]


def _numba_wanted() -> bool:
    return os.environ.get("BEASTFORGE_NO_NUMBA", "0") in ("", "0")


NUMBA_ENABLED = False
if _numba_wanted():
    try:
        from numba import njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        pass


# -----------------------------------------------------------------------------
# exact k-nearest-neighbour search
#
# Ties at equal distance break toward the lower reference index. Squared
# distances are computed componentwise as ((dx*dx + dy*dy) + dz*dz); the
# selection key is the pair (d2, index), which is a strict total order.
# -----------------------------------------------------------------------------

def _knn_loop(targets, refs, k, idx_out, d2_out):
    n = targets.shape[0]
    q = refs.shape[0]
    for i in range(n):
        tx = targets[i, 0]
        ty = targets[i, 1]
        tz = targets[i, 2]
        count = 0
        for j in range(q):
            dx = tx - refs[j, 0]
            dy = ty - refs[j, 1]
            dz = tz - refs[j, 2]
            d2 = (dx * dx + dy * dy) + dz * dz
            if count < k:
                pos = count
                while pos > 0 and d2 < d2_out[i, pos - 1]:
                    d2_out[i, pos] = d2_out[i, pos - 1]
                    idx_out[i, pos] = idx_out[i, pos - 1]
                    pos -= 1
                d2_out[i, pos] = d2
                idx_out[i, pos] = j
                count += 1
            elif d2 < d2_out[i, k - 1]:
                pos = k - 1
                while pos > 0 and d2 < d2_out[i, pos - 1]:
                    d2_out[i, pos] = d2_out[i, pos - 1]
                    idx_out[i, pos] = idx_out[i, pos - 1]
                    pos -= 1
                d2_out[i, pos] = d2
                idx_out[i, pos] = j


def _knn_numpy(targets, refs, k):
    n = targets.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    d2s = np.empty((n, k), dtype=np.float64)
    # chunk target rows so the (chunk, Q) distance matrix stays small
    chunk = max(1, (1 << 22) // max(refs.shape[0], 1))
    rx = refs[:, 0][None, :]
    ry = refs[:, 1][None, :]
    rz = refs[:, 2][None, :]
    for s in range(0, n, chunk):
        t = targets[s : s + chunk]
        dx = t[:, 0][:, None] - rx
        dy = t[:, 1][:, None] - ry
        dz = t[:, 2][:, None] - rz
        d2 = (dx * dx + dy * dy) + dz * dz
        # stable sort keeps the lower index first among equal distances
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[s : s + chunk] = order
        d2s[s : s + chunk] = np.take_along_axis(d2, order, axis=1)
    return idx, d2s


if NUMBA_ENABLED:
    _knn_loop_jit = njit(cache=True)(_knn_loop)


def knn_search(targets: np.ndarray, refs: np.ndarray, k: int):
    """Exact k nearest ``refs`` rows for every ``targets`` row.

    Returns ``(idx, dist)`` with shapes (n, k); both sorted by ascending
    (distance, index).
    """
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    refs = np.ascontiguousarray(refs, dtype=np.float64)
    if k > refs.shape[0]:
        raise ValueError(f"k={k} exceeds reference count {refs.shape[0]}")
    if NUMBA_ENABLED:
        idx = np.empty((targets.shape[0], k), dtype=np.int64)
        d2 = np.empty((targets.shape[0], k), dtype=np.float64)
        _knn_loop_jit(targets, refs, k, idx, d2)
    else:
        idx, d2 = _knn_numpy(targets, refs, k)
    return idx, np.sqrt(d2)


# -----------------------------------------------------------------------------
# scatter-accumulate of weighted features into cells
#
# Per cell: contribution count, weight sum, weighted feature sum, and the
# first-seen feature row (so single-contribution cells can pass their feature
# through unchanged instead of round-tripping a multiply/divide).
# -----------------------------------------------------------------------------

def _scatter_loop(cells, w, z, count, wsum, zsum, zfirst):
    m = cells.shape[0]
    c = z.shape[1]
    for i in range(m):
        cell = cells[i]
        if count[cell] == 0:
            for ch in range(c):
                zfirst[cell, ch] = z[i, ch]
        count[cell] += 1
        wi = w[i]
        wsum[cell] += wi
        for ch in range(c):
            zsum[cell, ch] += wi * z[i, ch]


if NUMBA_ENABLED:
    _scatter_loop_jit = njit(cache=True)(_scatter_loop)


def scatter_accumulate(cells: np.ndarray, w: np.ndarray, z: np.ndarray, ncells: int):
    """Accumulate weighted features per cell, left-to-right over the input.

    Returns ``(count, wsum, zsum, zfirst)`` dense over ``ncells``.
    """
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    c = z.shape[1]
    if NUMBA_ENABLED:
        count = np.zeros(ncells, dtype=np.int64)
        wsum = np.zeros(ncells, dtype=np.float64)
        zsum = np.zeros((ncells, c), dtype=np.float64)
        zfirst = np.zeros((ncells, c), dtype=np.float64)
        _scatter_loop_jit(cells, w, z, count, wsum, zsum, zfirst)
        return count, wsum, zsum, zfirst
    count = np.bincount(cells, minlength=ncells).astype(np.int64)
    wsum = np.bincount(cells, weights=w, minlength=ncells)
    zsum = np.empty((ncells, c), dtype=np.float64)
    for ch in range(c):
        zsum[:, ch] = np.bincount(cells, weights=w * z[:, ch], minlength=ncells)
    zfirst = np.zeros((ncells, c), dtype=np.float64)
    # reversed fancy assignment leaves the first occurrence in place
    zfirst[cells[::-1]] = z[::-1]
    return count, wsum, zsum, zfirst


# -----------------------------------------------------------------------------
# weighted bincount (per-(cell, region) mass accumulation)
# -----------------------------------------------------------------------------

def _wbincount_loop(ids, w, out):
    for i in range(ids.shape[0]):
        out[ids[i]] += w[i]


if NUMBA_ENABLED:
    _wbincount_loop_jit = njit(cache=True)(_wbincount_loop)


def weighted_bincount(ids: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
    """Sequential weighted bincount over ``n`` bins."""
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if NUMBA_ENABLED:
        out = np.zeros(n, dtype=np.float64)
        _wbincount_loop_jit(ids, w, out)
        return out
    return np.bincount(ids, weights=w, minlength=n)


# -----------------------------------------------------------------------------
# componentwise affine map
#
# q = lin @ p + trans evaluated as ((m00*x + m01*y) + m02*z) + t0 per row, so
# results match the scalar formula bitwise regardless of the active path.
# -----------------------------------------------------------------------------

def affine_apply(points: np.ndarray, lin: np.ndarray, trans: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    x = points[:, 0]
    y = points[:, 1]
    z = points[:, 2]
    out = np.empty_like(points)
    for row in range(3):
        out[:, row] = ((lin[row, 0] * x + lin[row, 1] * y) + lin[row, 2] * z) + trans[row]
    return out
