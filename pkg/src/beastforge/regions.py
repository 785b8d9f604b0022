"""The weight chain from mesh vertices to voxel latents.

Joint-level skinning weights are aggregated into per-region weights (rows
normalized against the total mass over region-covered joints, with an epsilon
guard so all-zero rows stay zero), then carried to active voxel positions by
normalized inverse-distance averaging over the k nearest mesh vertices.

Nearest-neighbour search is exact; ties at equal distance break toward the
lower vertex index so golden tests stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh, UnmappedJoint
from .kernels import knn_search
from .skeleton import CleanSkeleton, SemanticPartition

__all__ = [
    "AGGREGATION_EPS",
    "DEFAULT_K",
    "DEFAULT_DISTANCE_FLOOR",
    "SkinningMatrix",
    "RegionWeightMatrix",
    "SlatRegionWeights",
    "aggregate_region_weights",
    "knn_transfer",
    "assign_regions",
    "grid_to_canonical",
]

AGGREGATION_EPS = 1e-12
DEFAULT_K = 8
DEFAULT_DISTANCE_FLOOR = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SkinningMatrix:
    """Per-vertex, per-joint influence weights.

    Rows are renormalized on ingest to sum at most 1 (rigging backends differ
    on normalization conventions); all-zero rows stay zero.
    joint_index_map[j] is the original skeleton joint behind column j.
    """

    weights: np.ndarray
    joint_index_map: tuple[int, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("skinning weights must be a Q x J matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("skinning weights must be finite")
        if np.any(w < 0):
            raise ValueError("skinning weights must be nonnegative")
        sums = w.sum(axis=1)
        over = sums > 1.0
        if np.any(over):
            w = w.copy()
            w[over] /= sums[over][:, None]
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "joint_index_map", tuple(int(j) for j in self.joint_index_map))
        if len(self.joint_index_map) != w.shape[1]:
            raise ValueError("joint_index_map length must match column count")

    @property
    def num_vertices(self) -> int:
        return self.weights.shape[0]

    @property
    def num_joints(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class RegionWeightMatrix:
    """Q x R region membership weights; region_order fixes column order."""

    weights: np.ndarray
    region_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "region_order", tuple(self.region_order))
        if self.weights.shape[1] != len(self.region_order):
            raise ValueError("region_order length must match column count")


@dataclass(frozen=True)
class SlatRegionWeights:
    """L x R weights aligned with a sparse latent's active-voxel order."""

    weights: np.ndarray
    region_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "region_order", tuple(self.region_order))
        if self.weights.shape[1] != len(self.region_order):
            raise ValueError("region_order length must match column count")


def aggregate_region_weights(
    skinning: SkinningMatrix,
    partition: SemanticPartition,
    clean: CleanSkeleton,
) -> RegionWeightMatrix:
    """Sum each vertex's joint weights per region and normalize by the total
    mass over all region-covered joints, guarded by AGGREGATION_EPS.

    Region joints are retained-joint indices; clean.original_joint_map routes
    them to the original joints the skinning columns were predicted for.
    """
    w = skinning.weights
    col_of = {}
    for col, orig in enumerate(skinning.joint_index_map):
        col_of.setdefault(orig, []).append(col)

    region_cols: list[list[int]] = []
    for region in partition.regions:
        cols: list[int] = []
        for retained in sorted(region.joints):
            for orig in sorted(clean.original_joint_map[retained]):
                if orig not in col_of:
                    raise UnmappedJoint(
                        f"joint {orig} of region {region.ref} has no skinning column")
                cols.extend(col_of[orig])
        region_cols.append(cols)

    q = w.shape[0]
    r = len(partition.regions)
    numer = np.zeros((q, r), dtype=np.float64)
    for ridx, cols in enumerate(region_cols):
        if cols:
            numer[:, ridx] = w[:, cols].sum(axis=1)
    denom = np.maximum(numer.sum(axis=1), AGGREGATION_EPS)
    out = numer / denom[:, None]
    order = tuple(region.ref for region in partition.regions)
    return RegionWeightMatrix(weights=out, region_order=order)


def grid_to_canonical(positions: np.ndarray, resolution: int) -> np.ndarray:
    """Voxel index -> canonical-cube coordinate of the voxel center."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    return (pos + 0.5) / float(resolution) - 0.5


def knn_transfer(
    region_weights: RegionWeightMatrix,
    vertices: np.ndarray,
    voxel_positions: np.ndarray,
    k: int = DEFAULT_K,
    distance_floor: float = DEFAULT_DISTANCE_FLOOR,
) -> SlatRegionWeights:
    """Carry region weights to voxel positions by normalized inverse-distance
    averaging over each voxel's k nearest vertices.

    ``vertices`` and ``voxel_positions`` must share a frame; use
    grid_to_canonical for integer grid positions. distance_floor clamps the
    denominator so a coincident vertex dominates instead of dividing by zero.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    voxel_positions = np.asarray(voxel_positions, dtype=np.float64).reshape(-1, 3)
    q = vertices.shape[0]
    if q == 0:
        raise EmptyMesh("no vertices to transfer weights from")
    if not (0 < k <= q):
        raise ValueError(f"k must be in [1, {q}]")
    if not distance_floor > 0:
        raise ValueError("distance_floor must be positive")
    if region_weights.weights.shape[0] != q:
        raise ValueError("region weight rows must match vertex count")

    idx, dist = knn_search(voxel_positions, vertices, k)
    alpha = 1.0 / np.maximum(dist, distance_floor)
    beta = alpha / alpha.sum(axis=1, keepdims=True)
    out = np.einsum("lk,lkr->lr", beta, region_weights.weights[idx])
    return SlatRegionWeights(weights=out, region_order=region_weights.region_order)


def assign_regions(slat_weights: SlatRegionWeights, mode: str = "argmax",
                   threshold: float | None = None):
    """Discrete voxel-to-region assignment.

    argmax mode: one region index per voxel, ties to the earlier column.
    threshold mode: per-voxel list of region indices with weight >= threshold.
    """
    w = slat_weights.weights
    if mode == "argmax":
        return np.argmax(w, axis=1)
    if mode == "threshold":
        if threshold is None:
            raise ValueError("threshold mode needs a threshold")
        return [list(np.nonzero(row >= threshold)[0]) for row in w]
    raise ValueError(f"unknown mode {mode!r}")
