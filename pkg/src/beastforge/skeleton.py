"""Creature skeleton graphs: loading, cleaning, orientation, and semantic
classification into Body / Leg / Wing / Tail / Head regions.

The classifier is purely geometric and rule-based. Coordinates live in the
canonical unit cube [-0.5, 0.5]^3 with +y up. Cleaning keeps the largest
connected component, collapses straight degree-2 joints, and prunes leaf
branches shorter than a fraction of the bounding-box diagonal. Orientation is
the principal horizontal axis of the joint cloud; its sign is ambiguous, so
classification scores both hypotheses (head found +2, posterior tail +1,
symmetric legs +1) and keeps the better one.

All types are immutable after construction; every operation is a pure
function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ClassificationAmbiguous, DegenerateGeometry, EmptySkeleton

__all__ = [
    "Skeleton",
    "CleanSkeleton",
    "OrientationFrame",
    "Region",
    "SemanticPartition",
    "REGION_LABELS",
    "clean_skeleton",
    "estimate_orientation",
    "select_begin_node",
    "find_trunk_junction",
    "classify_regions",
]

REGION_LABELS = ("Body", "Leg", "Wing", "Tail", "Head")

# angle between incident bones within this many degrees of straight collapses
# the shared degree-2 joint
COLLINEAR_TOL_DEG = 5.0
# default leaf-branch pruning threshold, as a fraction of the bbox diagonal
DEFAULT_PRUNE_FRACTION = 0.05
# tail endpoint must sit within this fraction of the lateral extent of center
TAIL_CENTER_FRACTION = 0.15
# mirrored endpoints must land within this fraction of the bbox diagonal
SYMMETRY_FRACTION = 0.10


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Skeleton:
    """Joint-position graph with bone edges and a root joint.

    joints: (V, 3) float64 positions; bones: (E, 2) int64 joint-index pairs.
    """

    joints: np.ndarray
    bones: np.ndarray
    root: int
    joint_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        joints = _frozen(np.asarray(self.joints, dtype=np.float64).reshape(-1, 3), np.float64)
        bones = _frozen(np.asarray(self.bones, dtype=np.int64).reshape(-1, 2), np.int64)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "bones", bones)
        object.__setattr__(self, "root", int(self.root))
        if self.joint_names is not None:
            object.__setattr__(self, "joint_names", tuple(str(n) for n in self.joint_names))
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        v = joints.shape[0]
        if bones.size:
            if bones.min() < 0 or bones.max() >= v:
                raise ValueError("bone index out of range")
        if np.any(bones[:, 0] == bones[:, 1]):
            raise ValueError("bone connects a joint to itself")
        seen = set()
        for i, j in bones:
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bone {key}")
            seen.add(key)
        if not (0 <= self.root < v):
            raise ValueError("root index out of range")
        if self.joint_names is not None and len(self.joint_names) != v:
            raise ValueError("joint_names length mismatch")

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_joints)]
        for i, j in self.bones:
            adj[i].append(int(j))
            adj[j].append(int(i))
        return [sorted(n) for n in adj]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_joints, dtype=np.int64)
        for i, j in self.bones:
            deg[i] += 1
            deg[j] += 1
        return deg

    def bbox_diagonal(self) -> float:
        if self.num_joints == 0:
            return 0.0
        span = self.joints.max(axis=0) - self.joints.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class CleanSkeleton:
    """A cleaned skeleton plus the bookkeeping back to the original joints.

    original_joint_map[i] is the set of original joint indices that retained
    joint i stands for; pruned_branches lists the original-joint sets removed
    outright. Together they cover the original joint set exactly. bone_paths,
    aligned with skeleton.bones, gives the ordered original joint path each
    retained bone realizes (length 2 when nothing was collapsed on it).
    """

    skeleton: Skeleton
    original_joint_map: tuple[frozenset, ...]
    pruned_branches: tuple[frozenset, ...]
    bone_paths: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if len(self.original_joint_map) != self.skeleton.num_joints:
            raise ValueError("original_joint_map must cover every retained joint")
        seen: set[int] = set()
        for group in list(self.original_joint_map) + list(self.pruned_branches):
            if seen & group:
                raise ValueError("original joint mapped twice")
            seen |= group
        if self.bone_paths and len(self.bone_paths) != self.skeleton.bones.shape[0]:
            raise ValueError("bone_paths must align with the bone list")

    def original_bones_of(self, bone_ids) -> frozenset:
        """Original bone pairs realized by the given retained bone indices."""
        out = set()
        for k in bone_ids:
            path = self.bone_paths[k]
            for a, b in zip(path, path[1:]):
                out.add((min(a, b), max(a, b)))
        return frozenset(out)


@dataclass(frozen=True)
class OrientationFrame:
    """Right-handed frame: forward (dominant axis), up (+y), lateral = up x forward."""

    forward: np.ndarray
    up: np.ndarray
    lateral: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "forward", _frozen(self.forward, np.float64))
        object.__setattr__(self, "up", _frozen(self.up, np.float64))
        object.__setattr__(self, "lateral", _frozen(self.lateral, np.float64))
        for name in ("forward", "up", "lateral"):
            vec = getattr(self, name)
            if abs(np.linalg.norm(vec) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be unit length")
        for a, b in (("forward", "up"), ("forward", "lateral"), ("up", "lateral")):
            if abs(float(np.dot(getattr(self, a), getattr(self, b)))) > 1e-9:
                raise ValueError(f"{a} and {b} must be orthogonal")

    def flipped(self) -> "OrientationFrame":
        return OrientationFrame(-self.forward, self.up, np.cross(self.up, -self.forward))


@dataclass(frozen=True)
class Region:
    label: str
    instance_id: int
    joints: frozenset
    bones: frozenset

    def __post_init__(self):
        if self.label not in REGION_LABELS:
            raise ValueError(f"unknown region label {self.label!r}")

    @property
    def ref(self) -> str:
        return f"{self.label.lower()}/{self.instance_id}"


@dataclass(frozen=True)
class SemanticPartition:
    """Labeled sub-skeletons of one cleaned skeleton.

    Bone sets are pairwise disjoint and each induces a connected subgraph.
    At most one Body, Tail, and Head; Legs and Wings may repeat with distinct
    instance ids.
    """

    regions: tuple[Region, ...]
    begin_node: int
    trunk_junction: Optional[int] = None

    def __post_init__(self):
        seen_bones: set[int] = set()
        for region in self.regions:
            if seen_bones & region.bones:
                raise ValueError("bone assigned to two regions")
            seen_bones |= region.bones
        for label in ("Body", "Tail", "Head"):
            if sum(1 for r in self.regions if r.label == label) > 1:
                raise ValueError(f"more than one {label} region")

    def by_label(self, label: str) -> list[Region]:
        return [r for r in self.regions if r.label == label]

    def find(self, label: str, instance_id: int) -> Region:
        for r in self.regions:
            if r.label == label and r.instance_id == instance_id:
                return r
        raise KeyError(f"no region {label}/{instance_id}")


# -----------------------------------------------------------------------------
# cleaning
# -----------------------------------------------------------------------------

def _components(num_joints: int, bones: np.ndarray) -> list[set[int]]:
    parent = list(range(num_joints))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in bones:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, set[int]] = {}
    for v in range(num_joints):
        groups.setdefault(find(v), set()).add(v)
    return list(groups.values())


def _bone_angle_straight(p_prev: np.ndarray, p_mid: np.ndarray, p_next: np.ndarray) -> float:
    """Degrees of deviation from straight at p_mid (0 = perfectly collinear)."""
    a = p_mid - p_prev
    b = p_next - p_mid
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    cosv = float(np.dot(a, b) / (na * nb))
    cosv = max(-1.0, min(1.0, cosv))
    return math.degrees(math.acos(cosv))


def clean_skeleton(s: Skeleton, prune_fraction: float = DEFAULT_PRUNE_FRACTION) -> CleanSkeleton:
    """Keep the largest component, collapse collinear degree-2 joints, and
    prune short leaf branches.

    Collapse and prune repeat until neither applies, which makes the result a
    fixed point: cleaning a cleaned skeleton changes nothing.
    """
    if not (0.0 <= prune_fraction < 0.5):
        raise ValueError("prune_fraction must be in [0, 0.5)")
    if s.bones.shape[0] == 0:
        raise EmptySkeleton("skeleton has no bones")
    if s.bbox_diagonal() < 1e-12:
        raise DegenerateGeometry("all joints coincide")

    comps = _components(s.num_joints, s.bones)
    comps.sort(key=lambda c: (-len(c), min(c)))
    keep = comps[0]
    pruned: list[frozenset] = [frozenset(c) for c in comps[1:] if c]

    # mutable working graph over original joint ids; paths[key] is the
    # original joint chain a retained edge stands for, stored low-to-high
    alive = set(keep)
    owned: dict[int, set[int]] = {v: {v} for v in alive}
    edges: set[tuple[int, int]] = set()
    paths: dict[tuple[int, int], list[int]] = {}
    for i, j in s.bones:
        i, j = int(i), int(j)
        if i in alive and j in alive:
            key = (min(i, j), max(i, j))
            edges.add(key)
            paths[key] = [key[0], key[1]]

    def path_from(a: int, b: int) -> list[int]:
        key = (min(a, b), max(a, b))
        p = paths[key]
        return p if p[0] == a else p[::-1]

    pos = {v: s.joints[v] for v in alive}
    diag = float(np.linalg.norm(
        np.max([pos[v] for v in alive], axis=0) - np.min([pos[v] for v in alive], axis=0)
    ))
    threshold = prune_fraction * diag

    def neighbors(v):
        out = []
        for a, b in edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return sorted(out)

    root = s.root
    if root not in alive:
        # original root lost with its component; fall back to max degree
        deg = {v: len(neighbors(v)) for v in alive}
        root = min(alive, key=lambda v: (-deg[v], v))

    changed = True
    while changed:
        changed = False
        # collapse straight degree-2 joints, lowest index first
        for v in sorted(alive):
            nb = neighbors(v)
            if len(nb) != 2:
                continue
            a, b = nb
            if _bone_angle_straight(pos[a], pos[v], pos[b]) > COLLINEAR_TOL_DEG:
                continue
            if (min(a, b), max(a, b)) in edges:
                continue  # collapsing would create a duplicate bone
            deg_a = len(neighbors(a))
            deg_b = len(neighbors(b))
            merged = path_from(a, v) + path_from(v, b)[1:]
            edges.discard((min(a, v), max(a, v)))
            edges.discard((min(b, v), max(b, v)))
            del paths[(min(a, v), max(a, v))]
            del paths[(min(v, b), max(v, b))]
            key = (min(a, b), max(a, b))
            edges.add(key)
            paths[key] = merged if merged[0] == key[0] else merged[::-1]
            alive.discard(v)
            # absorb into the lower-degree endpoint (junctions stay pure so
            # region membership survives the collapse), then nearer, then
            # lower index
            da = float(np.linalg.norm(pos[v] - pos[a]))
            db = float(np.linalg.norm(pos[v] - pos[b]))
            host = a if (deg_a, da, a) <= (deg_b, db, b) else b
            owned[host] |= owned.pop(v)
            if root == v:
                root = host
            changed = True
        # prune short leaf branches; all branches are measured against the
        # same graph state, so twin stubs at one junction go together
        if threshold > 0.0:
            to_prune: list[tuple[list[int], int]] = []
            for leaf in sorted(alive):
                nb = neighbors(leaf)
                if len(nb) != 1:
                    continue
                path = [leaf]
                length = 0.0
                prev, cur = leaf, nb[0]
                while True:
                    length += float(np.linalg.norm(pos[cur] - pos[prev]))
                    nxt = [u for u in neighbors(cur) if u != prev]
                    if len(nxt) != 1:
                        break
                    path.append(cur)
                    prev, cur = cur, nxt[0]
                junction = cur
                if len(neighbors(junction)) < 3:
                    continue  # chain with no junction; nothing to prune against
                if length >= threshold:
                    continue
                to_prune.append((path, junction))
            for path, junction in to_prune:
                removed: set[int] = set()
                for v in path:
                    removed |= owned.pop(v)
                    alive.discard(v)
                dropped = {(a, b) for a, b in edges if a in path or b in path}
                edges -= dropped
                for key in dropped:
                    del paths[key]
                pruned.append(frozenset(removed))
                if root in path:
                    root = junction
                changed = True

    retained = sorted(alive)
    index = {v: i for i, v in enumerate(retained)}
    joints = np.array([pos[v] for v in retained], dtype=np.float64).reshape(-1, 3)
    bone_rows = sorted(((index[a], index[b]), paths[(a, b)]) for a, b in edges)
    bones = np.array([row[0] for row in bone_rows], dtype=np.int64).reshape(-1, 2)
    names = None
    if s.joint_names is not None:
        names = tuple(s.joint_names[v] for v in retained)
    if bones.shape[0] == 0:
        raise EmptySkeleton("cleaning removed every bone")
    cleaned = Skeleton(joints=joints, bones=bones, root=index[root], joint_names=names)
    joint_map = tuple(frozenset(owned[v]) for v in retained)
    return CleanSkeleton(skeleton=cleaned, original_joint_map=joint_map,
                         pruned_branches=tuple(pruned),
                         bone_paths=tuple(tuple(row[1]) for row in bone_rows))


# -----------------------------------------------------------------------------
# orientation
# -----------------------------------------------------------------------------

def estimate_orientation(s: CleanSkeleton) -> OrientationFrame:
    """Principal horizontal axis of the joint cloud, up fixed to +y.

    The forward sign is provisional; classify_regions resolves it by scoring
    both hypotheses.
    """
    pts = s.skeleton.joints
    horiz = pts[:, [0, 2]]
    centered = horiz - horiz.mean(axis=0)
    cov = centered.T @ centered / max(len(pts), 1)
    evals, evecs = np.linalg.eigh(cov)
    if float(evals[-1]) < 1e-9:
        raise DegenerateGeometry("no horizontal spread to orient by")
    ax = evecs[:, -1]
    forward = np.array([ax[0], 0.0, ax[1]], dtype=np.float64)
    forward /= np.linalg.norm(forward)
    # provisional sign: lean toward +x, then +z
    if forward[0] < 0 or (forward[0] == 0 and forward[2] < 0):
        forward = -forward
    up = np.array([0.0, 1.0, 0.0])
    return OrientationFrame(forward=forward, up=up, lateral=np.cross(up, forward))


# -----------------------------------------------------------------------------
# begin node and trunk junction
# -----------------------------------------------------------------------------

def select_begin_node(s: CleanSkeleton) -> int:
    """Root if it has degree >= 3, otherwise its highest-degree neighbor
    (ties to the lowest joint index)."""
    sk = s.skeleton
    deg = sk.degrees()
    r = sk.root
    if deg[r] >= 3:
        return r
    nbrs = sk.adjacency()[r]
    return int(min(nbrs, key=lambda u: (-deg[u], u)))


def find_trunk_junction(
    s: CleanSkeleton,
    frame: OrientationFrame,
    b: int,
    exclude_begin: bool = False,
) -> Optional[int]:
    """Joint of degree >= 4 minimizing the projection onto forward.

    Falls back to degree >= 3 excluding ``b`` when no joint has degree 4;
    returns None when neither exists (the fish-like degenerate path).
    ``exclude_begin`` additionally drops ``b`` from the primary candidates --
    classification uses that variant, since the search walks away from ``b``.
    """
    sk = s.skeleton
    deg = sk.degrees()
    proj = sk.joints @ frame.forward
    cands = [v for v in range(sk.num_joints) if deg[v] >= 4 and not (exclude_begin and v == b)]
    if not cands:
        cands = [v for v in range(sk.num_joints) if deg[v] >= 3 and v != b]
    if not cands:
        return None
    return int(min(cands, key=lambda v: (proj[v], v)))


# -----------------------------------------------------------------------------
# classification
# -----------------------------------------------------------------------------

@dataclass
class _Limb:
    leaf: int
    attach: Optional[int]
    joints: list[int]          # excludes the attachment joint
    bones: list[int]           # bone indices, leaf-to-attach order
    endpoint: np.ndarray = field(default=None)


def _bone_index(sk: Skeleton) -> dict[tuple[int, int], int]:
    return {(min(int(i), int(j)), max(int(i), int(j))): k for k, (i, j) in enumerate(sk.bones)}


def _limbs(sk: Skeleton) -> list[_Limb]:
    deg = sk.degrees()
    adj = sk.adjacency()
    bidx = _bone_index(sk)
    out = []
    for leaf in range(sk.num_joints):
        if deg[leaf] != 1:
            continue
        joints = [leaf]
        bones = []
        prev, cur = leaf, adj[leaf][0]
        bones.append(bidx[(min(prev, cur), max(prev, cur))])
        while deg[cur] == 2:
            joints.append(cur)
            nxt = [u for u in adj[cur] if u != prev][0]
            bones.append(bidx[(min(cur, nxt), max(cur, nxt))])
            prev, cur = cur, nxt
        attach = cur if deg[cur] >= 3 else None
        if attach is None:
            joints.append(cur)   # pure chain: the far leaf closes the limb
        limb = _Limb(leaf=leaf, attach=attach, joints=joints, bones=bones)
        limb.endpoint = sk.joints[leaf]
        out.append(limb)
    return out


def _tree_path(sk: Skeleton, a: int, d: int) -> tuple[list[int], list[int]]:
    """Joints and bone indices along the (BFS-shortest) path a -> d."""
    adj = sk.adjacency()
    bidx = _bone_index(sk)
    prev = {a: None}
    queue = [a]
    while queue:
        v = queue.pop(0)
        if v == d:
            break
        for u in adj[v]:
            if u not in prev:
                prev[u] = v
                queue.append(u)
    if d not in prev:
        return [], []
    joints = [d]
    while prev[joints[-1]] is not None:
        joints.append(prev[joints[-1]])
    joints.reverse()
    bones = [bidx[(min(x, y), max(x, y))] for x, y in zip(joints, joints[1:])]
    return joints, bones


def _reflect(p: np.ndarray, origin: np.ndarray, lateral: np.ndarray) -> np.ndarray:
    return p - 2.0 * float(np.dot(p - origin, lateral)) * lateral


def _pair_symmetric(items: list, frame: OrientationFrame, origin: np.ndarray,
                    diag: float, symmetry_fraction: float) -> list[tuple]:
    """Greedy mirror pairing of limbs/branches by endpoint, lowest index first."""
    tol = symmetry_fraction * diag
    unused = list(range(len(items)))
    pairs = []
    while unused:
        i = unused.pop(0)
        mirrored = _reflect(items[i].endpoint, origin, frame.lateral)
        best = None
        for j in unused:
            dist = float(np.linalg.norm(mirrored - items[j].endpoint))
            if dist < tol and (best is None or dist < best[0]):
                best = (dist, j)
        if best is not None:
            unused.remove(best[1])
            pairs.append((items[i], items[best[1]]))
    return pairs


@dataclass
class _Branch:
    joints: set
    bones: set
    endpoint: np.ndarray


def _branches_at(sk: Skeleton, d: int, blocked_bones: set) -> list[_Branch]:
    """Subtrees hanging off d, one per unblocked incident bone, excluding
    blocked (already assigned) bones."""
    adj = sk.adjacency()
    deg = sk.degrees()
    bidx = _bone_index(sk)
    out = []
    for x in adj[d]:
        first = bidx[(min(d, x), max(d, x))]
        if first in blocked_bones:
            continue
        joints = {d, x}
        bones = {first}
        stack = [x]
        seen = {d, x}
        while stack:
            v = stack.pop()
            for u in adj[v]:
                k = bidx[(min(v, u), max(v, u))]
                if k in blocked_bones or k in bones:
                    continue
                bones.add(k)
                if u not in seen:
                    seen.add(u)
                    joints.add(u)
                    stack.append(u)
        # endpoint: the branch's leaf (topology is jitter-stable); among
        # several leaves the farthest from d wins, ties to the lowest index
        cand = sorted(joints - {d})
        leaves = [v for v in cand if deg[v] == 1]
        pool = leaves if leaves else cand
        end = max(pool, key=lambda v: (float(np.linalg.norm(sk.joints[v] - sk.joints[d])), -v))
        out.append(_Branch(joints=joints, bones=bones, endpoint=sk.joints[end]))
    return out


def _classify_one(s: CleanSkeleton, frame: OrientationFrame,
                  tail_center_fraction: float, symmetry_fraction: float):
    """One sign hypothesis. Returns (regions, b, d, score) or raises
    ClassificationAmbiguous."""
    sk = s.skeleton
    pts = sk.joints
    diag = sk.bbox_diagonal()
    centroid = pts.mean(axis=0)
    lat_proj = pts @ frame.lateral
    lat_extent = float(lat_proj.max() - lat_proj.min())

    b = select_begin_node(s)
    b_pos = pts[b]
    d = find_trunk_junction(s, frame, b, exclude_begin=True)
    # reflection plane: spanned by (forward, up), positioned laterally at the
    # joint cloud's mean -- the sagittal-center estimate is far more stable
    # under jitter than any single joint
    mirror_origin = centroid

    limbs = _limbs(sk)
    classifiable = [l for l in limbs
                    if l.attach is not None and b not in l.joints
                    and (d is None or d not in l.joints)]

    assigned: set[int] = set()
    legs: list[_Limb] = []
    wings: list[tuple[_Limb, str]] = []

    # 1. leg candidates: leaves below the begin node, confirmed by symmetry
    low = [l for l in classifiable if l.endpoint[1] < b_pos[1]]
    leg_pairs = _pair_symmetric(low, frame, mirror_origin, diag, symmetry_fraction)
    for pa, pb in leg_pairs:
        legs.extend([pa, pb])
        assigned |= set(pa.bones) | set(pb.bones)
    leg_symmetry = len(leg_pairs) > 0

    # 2. tail: laterally centered endpoint extending opposite forward
    tail: Optional[_Limb] = None
    tail_cands = []
    for l in classifiable:
        if set(l.bones) & assigned:
            continue
        centered = abs(float(np.dot(l.endpoint - centroid, frame.lateral))) \
            < tail_center_fraction * lat_extent
        posterior = float(np.dot(l.endpoint - b_pos, frame.forward)) < 0.0
        if centered and posterior:
            tail_cands.append(l)
    if tail_cands:
        tail = min(tail_cands,
                   key=lambda l: (float(np.dot(l.endpoint - b_pos, frame.forward)), l.leaf))
        assigned |= set(tail.bones)

    # 3. body: the path from b to d
    body_joints: list[int] = []
    body_bones: list[int] = []
    if d is not None:
        body_joints, body_bones = _tree_path(sk, b, d)
        assigned |= set(body_bones)

    # 4. branches emanating from d: symmetric pairs -> wing/leg, remainder -> head
    head: Optional[_Branch] = None
    if d is not None:
        branches = _branches_at(sk, d, assigned)
        branch_pairs = _pair_symmetric(branches, frame, mirror_origin, diag, symmetry_fraction)
        paired = set()
        for pa, pb in branch_pairs:
            label = "Wing" if min(pa.endpoint[1], pb.endpoint[1]) > b_pos[1] else "Leg"
            wings.append((pa, label))
            wings.append((pb, label))
            paired.add(id(pa))
            paired.add(id(pb))
            assigned |= pa.bones | pb.bones
        rest = [br for br in branches if id(br) not in paired]
        if len(rest) > 1:
            raise ClassificationAmbiguous(
                f"{len(rest)} branches at the trunk junction tie for Head")
        if rest:
            head = rest[0]
            assigned |= head.bones

    # 5. degenerate: nothing recognizable -> the whole skeleton is Body
    if d is None and not legs:
        all_bones = frozenset(range(sk.bones.shape[0]))
        all_joints = frozenset(range(sk.num_joints))
        regions = (Region("Body", 1, all_joints, all_bones),)
        return regions, b, None, 0

    # 6. fold unassigned bones into the body
    leftovers = set(range(sk.bones.shape[0])) - assigned
    body_bone_set = set(body_bones) | leftovers

    def joints_of(bone_ids) -> frozenset:
        out = set()
        for k in bone_ids:
            out.add(int(sk.bones[k][0]))
            out.add(int(sk.bones[k][1]))
        return frozenset(out)

    regions: list[Region] = []
    if body_bone_set:
        regions.append(Region("Body", 1, joints_of(body_bone_set), frozenset(body_bone_set)))
    next_leg = 1
    for l in legs:
        regions.append(Region("Leg", next_leg, joints_of(l.bones) | {l.attach},
                              frozenset(l.bones)))
        next_leg += 1
    next_wing = 1
    for br, label in wings:
        if label == "Wing":
            regions.append(Region("Wing", next_wing, frozenset(br.joints), frozenset(br.bones)))
            next_wing += 1
        else:
            regions.append(Region("Leg", next_leg, frozenset(br.joints), frozenset(br.bones)))
            next_leg += 1
    if tail is not None:
        regions.append(Region("Tail", 1, joints_of(tail.bones) | {tail.attach},
                              frozenset(tail.bones)))
    if head is not None:
        regions.append(Region("Head", 1, frozenset(head.joints), frozenset(head.bones)))

    score = (2 if head is not None else 0) \
        + (1 if tail is not None else 0) \
        + (1 if leg_symmetry else 0)
    return tuple(regions), b, d, score


def classify_regions(
    s: CleanSkeleton,
    frame: OrientationFrame,
    tail_center_fraction: float = TAIL_CENTER_FRACTION,
    symmetry_fraction: float = SYMMETRY_FRACTION,
) -> tuple[SemanticPartition, OrientationFrame]:
    """Run the full rule set for both forward-sign hypotheses and keep the
    higher-scoring one (ties keep the +x-leaning sign)."""
    hypotheses = [frame, frame.flipped()]
    results = []
    for hyp in hypotheses:
        try:
            regions, b, d, score = _classify_one(s, hyp, tail_center_fraction,
                                                 symmetry_fraction)
        except ClassificationAmbiguous as exc:
            results.append((None, exc))
            continue
        results.append(((regions, b, d, score, hyp), None))
    usable = [r for r, _ in results if r is not None]
    if not usable:
        raise results[0][1]
    # stable max: the +x-leaning hypothesis comes first, so ties keep it
    best = max(usable, key=lambda r: r[3])
    regions, b, d, _, hyp = best
    return SemanticPartition(regions=regions, begin_node=b, trunk_junction=d), hyp
