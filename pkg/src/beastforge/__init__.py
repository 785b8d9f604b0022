"""beastforge: skeleton-guided composition of rigged 3D creature assets.

The engine classifies creature skeletons into semantic regions, plans an
assembly as primitive transform operations, carries skinning weights from
mesh vertices to sparse voxel latents, and blends the per-region latents
into one composed asset. All neural backends sit behind the gateway module
and have deterministic offline fixtures.
"""

from .errors import (AllZeroWeights, BackendUnavailable, BeastForgeError,
                     ClassificationAmbiguous, DegenerateGeometry,
                     DisconnectedResult, EmptyMesh, EmptySkeleton, FormatError,
                     MalformedResponse, OutOfBounds, PlanRejected,
                     StructureViolation, UnmappedJoint)
from .skeleton import (CleanSkeleton, OrientationFrame, Region,
                       SemanticPartition, Skeleton, classify_regions,
                       clean_skeleton, estimate_orientation,
                       find_trunk_junction, select_begin_node)

__version__ = "0.1.0"
