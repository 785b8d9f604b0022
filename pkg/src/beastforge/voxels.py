"""Sparse voxel latent composition.

Pipeline: per-region rigid/affine transform with grid re-quantization, then
downsampling into a compact coarse grid, multi-region gap filling, and
upsampling back to the fine sparse representation.

Determinism contract (shared with the dense test oracle):
  * contributions are enumerated region-major, then source-voxel order, then
    subsample order, and accumulated left-to-right;
  * voxel (x, y, z) maps to the linear cell id ((x * N) + y) * N + z;
  * cells receiving exactly one contribution pass its feature through
    unchanged; overlaps merge as sum(w_i * z_i) / sum(w_i);
  * gap filling scans 26-neighborhood offsets x-major and reads only the
    previous pass's state;
  * seam cells emit their full fine block with occupancy-masked trilinear
    interpolation of coarse features, corners enumerated x-major.

Output voxel lists are sorted by linear cell id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllZeroWeights, OutOfBounds
from .kernels import scatter_accumulate, weighted_bincount
from .planner import AffineTransform
from .regions import SlatRegionWeights, assign_regions, grid_to_canonical

__all__ = [
    "SparseLatent",
    "RegionLatent",
    "DenseCoarseGrid",
    "ComposedLatent",
    "CompositionConfig",
    "extract_region_latents",
    "empty_regions",
    "transform_voxels",
    "downsample_to_coarse",
    "fill_gaps",
    "merge_overlaps",
    "upsample_to_slat",
    "compose",
]

DEFAULT_RESOLUTION = 64
DEFAULT_CHANNELS = 8
DEFAULT_COARSE_FACTOR = 4
DEFAULT_FILL_PASSES = 2

# 26-neighborhood offsets, x-major scan order
_OFFSETS = tuple((dx, dy, dz)
                 for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
                 if (dx, dy, dz) != (0, 0, 0))

# 2x supersample offsets in voxel units, voxel-major emission order
_SUBSAMPLES = tuple((dx, dy, dz)
                    for dx in (-0.25, 0.25) for dy in (-0.25, 0.25) for dz in (-0.25, 0.25))


def _freeze(a: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SparseLatent:
    """Active-voxel feature list on an N^3 grid."""

    resolution: int
    channels: int
    positions: np.ndarray   # (L, 3) int64 in [0, N)^3, unique
    features: np.ndarray    # (L, C) float64

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1, 3)
        feat = np.asarray(self.features, dtype=np.float64)
        if feat.ndim != 2:
            feat = feat.reshape(pos.shape[0], -1) if pos.size else feat.reshape(0, self.channels)
        object.__setattr__(self, "positions", _freeze(pos, np.int64))
        object.__setattr__(self, "features", _freeze(feat, np.float64))
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "channels", int(self.channels))
        n = self.resolution
        if pos.size and (pos.min() < 0 or pos.max() >= n):
            raise ValueError("voxel position out of range")
        if feat.shape[1] != self.channels:
            raise ValueError("feature width does not match channel count")
        if not np.all(np.isfinite(feat)):
            raise ValueError("features must be finite")
        lin = self.linear_ids()
        if np.unique(lin).size != lin.size:
            raise ValueError("duplicate voxel positions")

    @property
    def num_voxels(self) -> int:
        return self.positions.shape[0]

    def linear_ids(self) -> np.ndarray:
        n = self.resolution
        p = self.positions
        return (p[:, 0] * n + p[:, 1]) * n + p[:, 2]


@dataclass(frozen=True)
class RegionLatent:
    """One region's share of a sparse latent plus its per-voxel weights."""

    ref: str
    resolution: int
    positions: np.ndarray
    features: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1, 3)
        feat = np.asarray(self.features, dtype=np.float64)
        if feat.ndim != 2:
            feat = feat.reshape(pos.shape[0], -1) if pos.size else feat.reshape(0, 0)
        w = np.asarray(self.weights, dtype=np.float64).reshape(pos.shape[0])
        object.__setattr__(self, "positions", _freeze(pos, np.int64))
        object.__setattr__(self, "features", _freeze(feat, np.float64))
        object.__setattr__(self, "weights", _freeze(w, np.float64))
        object.__setattr__(self, "resolution", int(self.resolution))

    @property
    def num_voxels(self) -> int:
        return self.positions.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.positions.shape[0] == 0

    def linear_ids(self) -> np.ndarray:
        n = self.resolution
        p = self.positions
        return (p[:, 0] * n + p[:, 1]) * n + p[:, 2]


@dataclass(frozen=True)
class DenseCoarseGrid:
    """Dense D^3 grid of merged features and region weights.

    Unoccupied cells carry zeros; occupied cells' region-weight rows sum to 1
    within 1e-6. ``seam`` flags cells created by gap filling.
    """

    resolution: int
    fine_resolution: int
    region_order: tuple[str, ...]
    occupancy: np.ndarray       # (D, D, D) bool
    features: np.ndarray        # (D, D, D, C)
    region_weights: np.ndarray  # (D, D, D, R)
    seam: np.ndarray            # (D, D, D) bool

    @property
    def factor(self) -> int:
        return self.fine_resolution // self.resolution

    def dominant_regions(self) -> np.ndarray:
        return np.argmax(self.region_weights, axis=-1)


@dataclass(frozen=True)
class ComposedLatent:
    """The composed sparse latent, per-voxel dominant region, and seam voxels."""

    latent: SparseLatent
    provenance: np.ndarray           # (L,) int64 region indices
    region_order: tuple[str, ...]
    seam_mask: np.ndarray            # (M, 3) int64 positions created by gap fill

    @property
    def seam_set(self) -> frozenset:
        return frozenset(map(tuple, self.seam_mask.tolist()))


@dataclass(frozen=True)
class CompositionConfig:
    coarse_factor: int = DEFAULT_COARSE_FACTOR
    fill_passes: int = DEFAULT_FILL_PASSES
    out_of_bounds_fraction: float = 0.5


# -----------------------------------------------------------------------------
# region extraction
# -----------------------------------------------------------------------------

def extract_region_latents(slat: SparseLatent, weights: SlatRegionWeights) -> list[RegionLatent]:
    """Split a latent by argmax region assignment.

    Every input voxel lands in exactly one region, carrying its weight for
    that region; the union of the outputs is the input voxel set. Empty
    regions come back with zero voxels (see empty_regions)."""
    if weights.weights.shape[0] != slat.num_voxels:
        raise ValueError("weights not aligned with latent voxel order")
    owner = assign_regions(weights, mode="argmax")
    out = []
    for ridx, ref in enumerate(weights.region_order):
        mask = owner == ridx
        out.append(RegionLatent(
            ref=ref,
            resolution=slat.resolution,
            positions=slat.positions[mask],
            features=slat.features[mask],
            weights=weights.weights[mask, ridx],
        ))
    return out


def empty_regions(extracted: Sequence[RegionLatent]) -> list[str]:
    """Region refs that received no voxels (reported, not fatal)."""
    return [r.ref for r in extracted if r.is_empty]


# -----------------------------------------------------------------------------
# transform + re-quantization
# -----------------------------------------------------------------------------

def _quantize(mapped: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-cell indices for canonical-space points; also an in-range mask."""
    g = np.floor((mapped + 0.5) * float(n)).astype(np.int64)
    ok = np.all((g >= 0) & (g < n), axis=1)
    return g, ok


def _finalize(count, wsum, zsum, zfirst, channels):
    """Features per occupied cell under the single-pass-through rule."""
    occupied = count > 0
    multi = count > 1
    if np.any(multi & (wsum == 0.0)):
        raise AllZeroWeights("colliding contributions all carry zero weight")
    feats = np.zeros((count.shape[0], channels), dtype=np.float64)
    single = count == 1
    feats[single] = zfirst[single]
    if np.any(multi):
        feats[multi] = zsum[multi] / wsum[multi][:, None]
    return occupied, feats


def transform_voxels(region: RegionLatent, transform: AffineTransform,
                     out_of_bounds_fraction: float = 0.5) -> RegionLatent:
    """Map voxel centers through the affine and re-quantize to the grid.

    Non-axis-aligned transforms are 2x supersampled (8 octant samples per
    voxel at weight w/8) to limit rotation holes; colliding samples merge by
    weighted averaging. Raises OutOfBounds when more than the allowed
    fraction of voxel centers leaves the canonical cube."""
    n = region.resolution
    if region.is_empty:
        return region
    centers = grid_to_canonical(region.positions, n)
    mapped_centers = transform.apply(centers)
    _, ok = _quantize(mapped_centers, n)
    frac_out = 1.0 - (float(np.count_nonzero(ok)) / region.num_voxels)
    if frac_out > out_of_bounds_fraction:
        raise OutOfBounds(
            f"{frac_out:.0%} of region {region.ref} left the canonical cube")

    if transform.is_axis_aligned:
        samples = mapped_centers
        sw = region.weights
        sf = region.features
    else:
        l = region.num_voxels
        pts = np.repeat(centers, len(_SUBSAMPLES), axis=0)
        offs = np.asarray(_SUBSAMPLES, dtype=np.float64) / float(n)
        pts = pts + np.tile(offs, (l, 1))
        samples = transform.apply(pts)
        sw = np.repeat(region.weights / 8.0, len(_SUBSAMPLES))
        sf = np.repeat(region.features, len(_SUBSAMPLES), axis=0)

    grid_idx, in_range = _quantize(samples, n)
    cells = (grid_idx[:, 0] * n + grid_idx[:, 1]) * n + grid_idx[:, 2]
    cells = cells[in_range]
    sw = sw[in_range]
    sf = sf[in_range]
    count, wsum, zsum, zfirst = scatter_accumulate(cells, sw, sf, n ** 3)
    occupied, feats = _finalize(count, wsum, zsum, zfirst, region.features.shape[1])
    lin = np.nonzero(occupied)[0]
    positions = np.stack([lin // (n * n), (lin // n) % n, lin % n], axis=1)
    return RegionLatent(
        ref=region.ref,
        resolution=n,
        positions=positions,
        features=feats[lin],
        weights=wsum[lin],
    )


# -----------------------------------------------------------------------------
# coarse grid
# -----------------------------------------------------------------------------

def downsample_to_coarse(regions: Sequence[RegionLatent],
                         factor: int = DEFAULT_COARSE_FACTOR) -> DenseCoarseGrid:
    """Aggregate each factor^3 block: occupancy by any active voxel, features
    and region weights by weight-weighted means across all regions."""
    live = [r for r in regions if not r.is_empty]
    if not live:
        n = regions[0].resolution if regions else DEFAULT_RESOLUTION
        c = regions[0].features.shape[1] if regions else DEFAULT_CHANNELS
        d = n // factor
        order = tuple(r.ref for r in regions)
        shape = (d, d, d)
        return DenseCoarseGrid(d, n, order,
                               np.zeros(shape, bool),
                               np.zeros(shape + (c,)),
                               np.zeros(shape + (len(order),)),
                               np.zeros(shape, bool))
    n = live[0].resolution
    if any(r.resolution != n for r in live):
        raise ValueError("regions disagree on resolution")
    if n % factor != 0:
        raise ValueError(f"coarse factor {factor} does not divide resolution {n}")
    d = n // factor
    c = live[0].features.shape[1]
    order = tuple(r.ref for r in regions)
    rcount = len(order)

    cells_parts, w_parts, f_parts, ridx_parts = [], [], [], []
    for ridx, region in enumerate(regions):
        if region.is_empty:
            continue
        p = region.positions // factor
        cells_parts.append((p[:, 0] * d + p[:, 1]) * d + p[:, 2])
        w_parts.append(region.weights)
        f_parts.append(region.features)
        ridx_parts.append(np.full(region.num_voxels, ridx, dtype=np.int64))
    cells = np.concatenate(cells_parts)
    w = np.concatenate(w_parts)
    f = np.vstack(f_parts)
    ridx = np.concatenate(ridx_parts)

    count, wsum, zsum, zfirst = scatter_accumulate(cells, w, f, d ** 3)
    occupied, feats = _finalize(count, wsum, zsum, zfirst, c)
    mass = weighted_bincount(cells * rcount + ridx, w, d ** 3 * rcount).reshape(d ** 3, rcount)
    rw = np.zeros((d ** 3, rcount), dtype=np.float64)
    occ_idx = np.nonzero(occupied)[0]
    rw[occ_idx] = mass[occ_idx] / wsum[occ_idx][:, None]

    shape = (d, d, d)
    return DenseCoarseGrid(
        resolution=d,
        fine_resolution=n,
        region_order=order,
        occupancy=occupied.reshape(shape),
        features=feats.reshape(shape + (c,)),
        region_weights=rw.reshape(shape + (rcount,)),
        seam=np.zeros(shape, dtype=bool),
    )


# -----------------------------------------------------------------------------
# gap filling
# -----------------------------------------------------------------------------

def _fill_pass(grid: DenseCoarseGrid) -> DenseCoarseGrid:
    d = grid.resolution
    c = grid.features.shape[-1]
    r = grid.region_weights.shape[-1]
    occ = grid.occupancy
    dom = grid.dominant_regions()

    nbr_count = np.zeros((d, d, d), dtype=np.int64)
    fsum = np.zeros((d, d, d, c), dtype=np.float64)
    rwsum = np.zeros((d, d, d, r), dtype=np.float64)
    present = np.zeros((d, d, d, r), dtype=bool)

    def shifted_slices(off):
        src = []
        dst = []
        for o in off:
            if o >= 0:
                src.append(slice(o, d))
                dst.append(slice(0, d - o))
            else:
                src.append(slice(0, d + o))
                dst.append(slice(-o, d))
        return tuple(src), tuple(dst)

    for off in _OFFSETS:
        src, dst = shifted_slices(off)
        occ_n = occ[src]
        nbr_count[dst] += occ_n
        fsum[dst] += np.where(occ_n[..., None], grid.features[src], 0.0)
        rwsum[dst] += np.where(occ_n[..., None], grid.region_weights[src], 0.0)
        dom_n = dom[src]
        for ridx in range(r):
            present[dst + (ridx,)] |= occ_n & (dom_n == ridx)

    distinct = present.sum(axis=-1)
    fill = (~occ) & (nbr_count > 0) & (distinct >= 2)
    if not np.any(fill):
        return grid

    cnt = nbr_count[fill].astype(np.float64)
    mean_f = fsum[fill] / cnt[:, None]
    mean_rw = rwsum[fill] / cnt[:, None]
    norm = np.cumsum(mean_rw, axis=-1)[:, -1]
    mean_rw = mean_rw / norm[:, None]

    occ2 = occ.copy()
    occ2[fill] = True
    feats2 = grid.features.copy()
    feats2[fill] = mean_f
    rw2 = grid.region_weights.copy()
    rw2[fill] = mean_rw
    seam2 = grid.seam.copy()
    seam2[fill] = True
    return DenseCoarseGrid(grid.resolution, grid.fine_resolution, grid.region_order,
                           occ2, feats2, rw2, seam2)


def fill_gaps(grid: DenseCoarseGrid, passes: int = DEFAULT_FILL_PASSES) -> DenseCoarseGrid:
    """Fill empty cells whose 26-neighborhood spans at least two dominant
    regions with the unweighted neighbor mean; repeat ``passes`` times.

    Each pass reads only the previous grid state, so the result is
    order-independent and occupancy only ever grows."""
    out = grid
    for _ in range(passes):
        out = _fill_pass(out)
    return out


# -----------------------------------------------------------------------------
# overlap merge (the public single-cell operation)
# -----------------------------------------------------------------------------

def merge_overlaps(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Normalized weighted average of co-located features.

    A single contribution passes through unchanged; all-zero weights raise."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    z = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if w.shape[0] == 0:
        raise ValueError("merge needs at least one contribution")
    if z.shape[0] != w.shape[0]:
        raise ValueError("weights and features disagree on length")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if w.shape[0] == 1:
        return z[0].copy()
    total = float(np.cumsum(w)[-1])
    if total == 0.0:
        raise AllZeroWeights("every overlap weight is zero")
    num = np.cumsum(w[:, None] * z, axis=0)[-1]
    return num / total


# -----------------------------------------------------------------------------
# upsampling
# -----------------------------------------------------------------------------

def _seam_fine(grid: DenseCoarseGrid, seam_cells: np.ndarray):
    """Emit the f^3 fine block of every seam cell with occupancy-masked
    trilinear interpolation of the surrounding coarse features."""
    f = grid.factor
    d = grid.resolution
    c = grid.features.shape[-1]
    if seam_cells.shape[0] == 0:
        return (np.zeros((0, 3), dtype=np.int64), np.zeros((0, c), dtype=np.float64))
    offs = np.array([(ox, oy, oz)
                     for ox in range(f) for oy in range(f) for oz in range(f)],
                    dtype=np.int64)
    cells = np.repeat(seam_cells, f ** 3, axis=0)
    offsets = np.tile(offs, (seam_cells.shape[0], 1))
    fine_pos = cells * f + offsets
    u = cells.astype(np.float64) + (offsets.astype(np.float64) + 0.5) / float(f) - 0.5
    base = np.floor(u).astype(np.int64)
    t = u - base
    ws = np.zeros(fine_pos.shape[0], dtype=np.float64)
    fs = np.zeros((fine_pos.shape[0], c), dtype=np.float64)
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        cx = np.clip(base[:, 0] + dx, 0, d - 1)
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            cy = np.clip(base[:, 1] + dy, 0, d - 1)
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                cz = np.clip(base[:, 2] + dz, 0, d - 1)
                w = (wx * wy) * wz
                occ = grid.occupancy[cx, cy, cz]
                ws += np.where(occ, w, 0.0)
                fs += np.where(occ, w, 0.0)[:, None] * grid.features[cx, cy, cz]
    return fine_pos, fs / ws[:, None]


def upsample_to_slat(grid: DenseCoarseGrid,
                     regions: Sequence[RegionLatent]) -> ComposedLatent:
    """Re-emit the transformed regions' fine voxels (merged where they
    collide) and expand seam cells into interpolated fine blocks."""
    live = [r for r in regions if not r.is_empty]
    n = grid.fine_resolution
    c = live[0].features.shape[1] if live else grid.features.shape[-1]
    rcount = len(grid.region_order)

    if live:
        cells = np.concatenate([r.linear_ids() for r in regions if not r.is_empty])
        w = np.concatenate([r.weights for r in regions if not r.is_empty])
        f = np.vstack([r.features for r in regions if not r.is_empty])
        ridx = np.concatenate([
            np.full(r.num_voxels, i, dtype=np.int64)
            for i, r in enumerate(regions) if not r.is_empty
        ])
        count, wsum, zsum, zfirst = scatter_accumulate(cells, w, f, n ** 3)
        occupied, feats = _finalize(count, wsum, zsum, zfirst, c)
        mass = weighted_bincount(cells * rcount + ridx, w, n ** 3 * rcount)
        mass = mass.reshape(n ** 3, rcount)
        lin = np.nonzero(occupied)[0]
        orig_pos = np.stack([lin // (n * n), (lin // n) % n, lin % n], axis=1)
        orig_feat = feats[lin]
        orig_prov = np.argmax(mass[lin], axis=1)
    else:
        orig_pos = np.zeros((0, 3), dtype=np.int64)
        orig_feat = np.zeros((0, c), dtype=np.float64)
        orig_prov = np.zeros(0, dtype=np.int64)

    seam_cells = np.argwhere(grid.seam)
    seam_pos, seam_feat = _seam_fine(grid, seam_cells)
    if seam_pos.shape[0]:
        dom = grid.dominant_regions()
        cells_rep = np.repeat(seam_cells, grid.factor ** 3, axis=0)
        seam_prov = dom[cells_rep[:, 0], cells_rep[:, 1], cells_rep[:, 2]]
        all_pos = np.vstack([orig_pos, seam_pos])
        all_feat = np.vstack([orig_feat, seam_feat])
        all_prov = np.concatenate([orig_prov, seam_prov])
    else:
        all_pos, all_feat, all_prov = orig_pos, orig_feat, orig_prov

    lin_all = (all_pos[:, 0] * n + all_pos[:, 1]) * n + all_pos[:, 2]
    order = np.argsort(lin_all, kind="stable")
    latent = SparseLatent(resolution=n, channels=c,
                          positions=all_pos[order], features=all_feat[order])
    return ComposedLatent(
        latent=latent,
        provenance=all_prov[order],
        region_order=grid.region_order,
        seam_mask=seam_pos,
    )


# -----------------------------------------------------------------------------
# the full pipeline
# -----------------------------------------------------------------------------

def compose(inputs: Sequence[tuple[RegionLatent, AffineTransform]],
            config: CompositionConfig = CompositionConfig()) -> ComposedLatent:
    """transform -> downsample -> fill -> upsample, deterministically."""
    if not inputs:
        raise ValueError("compose needs at least one region")
    transformed = [
        transform_voxels(region, affine, config.out_of_bounds_fraction)
        for region, affine in inputs
    ]
    grid = downsample_to_coarse(transformed, config.coarse_factor)
    grid = fill_gaps(grid, config.fill_passes)
    return upsample_to_slat(grid, transformed)
