"""Assembly planning: the Rotate/Translate/Scale operator algebra, plan
validation, and plan execution into a merged target skeleton.

Plans are declarative. Execution always starts from the source parts and
applies ops-then-copies-then-attachments, so re-running a plan (or a prefix
of it) is exactly reproducible. Per-part accumulated affines are recorded so
downstream consumers (the voxel composer) apply the identical transform.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DisconnectedResult, PlanRejected
from .kernels import affine_apply
from .skeleton import OrientationFrame, Region, SemanticPartition, Skeleton

__all__ = [
    "PartRef",
    "JointRef",
    "Rotate",
    "Translate",
    "Scale",
    "EditOp",
    "AffineTransform",
    "PartDecl",
    "Attachment",
    "AssemblyPlan",
    "AssemblyPart",
    "AssembledSkeleton",
    "apply_op",
    "op_to_affine",
    "copy_transforms",
    "instantiate_copies",
    "build_parts",
    "plan_assembly",
    "validate_plan",
    "execute_plan",
    "parse_multiplicity",
]


# -----------------------------------------------------------------------------
# references
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class PartRef:
    """Region reference: source asset id, region label (lowercase), instance id."""

    asset: str
    label: str
    instance: int

    def __str__(self) -> str:
        return f"{self.asset}/{self.label}/{self.instance}"

    @classmethod
    def parse(cls, text: str) -> "PartRef":
        bits = text.split("/")
        if len(bits) != 3:
            raise ValueError(f"bad part reference {text!r}")
        return cls(bits[0], bits[1].lower(), int(bits[2]))


@dataclass(frozen=True)
class JointRef:
    """A part-local joint: ``<asset>/<label>/<instance>/joint/<k>``.

    The short form ``<label>/joint/<k>`` resolves against the unique part
    with that label.
    """

    part: Optional[PartRef]
    label_only: Optional[str]
    joint: int

    def __str__(self) -> str:
        if self.part is not None:
            return f"{self.part}/joint/{self.joint}"
        return f"{self.label_only}/joint/{self.joint}"

    @classmethod
    def parse(cls, text: str) -> "JointRef":
        bits = text.split("/")
        if len(bits) == 5 and bits[3] == "joint":
            return cls(PartRef(bits[0], bits[1].lower(), int(bits[2])), None, int(bits[4]))
        if len(bits) == 3 and bits[1] == "joint":
            return cls(None, bits[0].lower(), int(bits[2]))
        raise ValueError(f"bad joint reference {text!r}")


# -----------------------------------------------------------------------------
# primitive operators
# -----------------------------------------------------------------------------

def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(3)


@dataclass(frozen=True)
class Rotate:
    target: PartRef
    axis: np.ndarray
    pivot: np.ndarray
    angle_deg: float

    kind = "rotate"

    def __post_init__(self):
        object.__setattr__(self, "axis", _vec(self.axis))
        object.__setattr__(self, "pivot", _vec(self.pivot))
        object.__setattr__(self, "angle_deg", float(self.angle_deg))

    def violations(self) -> list[str]:
        out = []
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            out.append(f"rotate axis not unit length for {self.target}")
        if not math.isfinite(self.angle_deg):
            out.append(f"rotate angle not finite for {self.target}")
        return out

    def inverse(self) -> "Rotate":
        return Rotate(self.target, self.axis, self.pivot, -self.angle_deg)


@dataclass(frozen=True)
class Translate:
    target: PartRef
    direction: np.ndarray
    distance: float

    kind = "translate"

    def __post_init__(self):
        object.__setattr__(self, "direction", _vec(self.direction))
        object.__setattr__(self, "distance", float(self.distance))

    def violations(self) -> list[str]:
        out = []
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            out.append(f"translate direction not unit length for {self.target}")
        if not math.isfinite(self.distance):
            out.append(f"translate distance not finite for {self.target}")
        return out

    def inverse(self) -> "Translate":
        return Translate(self.target, self.direction, -self.distance)


@dataclass(frozen=True)
class Scale:
    target: PartRef
    factor: float
    pivot: np.ndarray

    kind = "scale"

    def __post_init__(self):
        object.__setattr__(self, "factor", float(self.factor))
        object.__setattr__(self, "pivot", _vec(self.pivot))

    def violations(self) -> list[str]:
        out = []
        if not (self.factor > 0.0) or not math.isfinite(self.factor):
            out.append(f"non-positive scale for {self.target}")
        return out

    def inverse(self) -> "Scale":
        return Scale(self.target, 1.0 / self.factor, self.pivot)


EditOp = Union[Rotate, Translate, Scale]


# -----------------------------------------------------------------------------
# affine transforms
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineTransform:
    """q = lin @ p + trans."""

    lin: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lin", np.asarray(self.lin, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "trans", _vec(self.trans))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3), np.zeros(3))

    def after(self, other: "AffineTransform") -> "AffineTransform":
        """self composed after other: (self.after(other))(p) == self(other(p))."""
        return AffineTransform(self.lin @ other.lin, self.lin @ other.trans + self.trans)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return affine_apply(np.asarray(points, dtype=np.float64).reshape(-1, 3),
                            self.lin, self.trans)

    @property
    def is_axis_aligned(self) -> bool:
        """True when the linear part is diagonal (no rotation/shear), in which
        case grid resampling needs no supersampling."""
        off = self.lin - np.diag(np.diag(self.lin))
        return bool(np.all(off == 0.0))


def _rotation_matrix(axis: np.ndarray, angle_deg: float) -> np.ndarray:
    theta = math.radians(angle_deg)
    k = axis / np.linalg.norm(axis)
    kx, ky, kz = k
    cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return math.cos(theta) * np.eye(3) + math.sin(theta) * cross \
        + (1.0 - math.cos(theta)) * np.outer(k, k)


def op_to_affine(op: EditOp) -> AffineTransform:
    if isinstance(op, Rotate):
        rot = _rotation_matrix(op.axis, op.angle_deg)
        return AffineTransform(rot, op.pivot - rot @ op.pivot)
    if isinstance(op, Translate):
        return AffineTransform(np.eye(3), op.direction * op.distance)
    if isinstance(op, Scale):
        if not op.factor > 0.0:
            raise ValueError("scale factor must be positive")
        return AffineTransform(np.eye(3) * op.factor, op.pivot * (1.0 - op.factor))
    raise TypeError(f"not an edit op: {op!r}")


def apply_op(joints: np.ndarray, op: EditOp) -> np.ndarray:
    """Apply one primitive operator to a joint array."""
    bad = op.violations()
    if bad:
        raise ValueError("; ".join(bad))
    return op_to_affine(op).apply(joints)


# -----------------------------------------------------------------------------
# symmetric copy placement
# -----------------------------------------------------------------------------

def copy_transforms(joints: np.ndarray, n: int, frame: OrientationFrame) -> list[AffineTransform]:
    """Affines that place n copies symmetrically about the (forward, up)
    mid-plane through the origin.

    Even n: mirrored pairs at lateral centroid offsets +-k * width.
    Odd n: one copy translated onto the mid-plane, then mirrored pairs.
    The minus-side copy of each pair is the reflection of the plus-side copy,
    so the union is mirror symmetric whenever the part itself is (any part
    with no lateral extent qualifies; so does any even n).
    """
    if n < 1:
        raise ValueError("copies must be >= 1")
    if n == 1:
        return [AffineTransform.identity()]
    joints = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
    lat = frame.lateral
    proj = joints @ lat
    center = float(proj.mean())
    width = float(proj.max() - proj.min())
    if width < 1e-9:
        span = joints.max(axis=0) - joints.min(axis=0)
        width = max(float(np.linalg.norm(span)) * 0.5, 1e-3)
    mirror = AffineTransform(np.eye(3) - 2.0 * np.outer(lat, lat), np.zeros(3))

    def shift_to(offset: float) -> AffineTransform:
        return AffineTransform(np.eye(3), (offset - center) * lat)

    out: list[AffineTransform] = []
    if n % 2 == 1:
        out.append(shift_to(0.0))
    for k in range(1, n // 2 + 1):
        plus = shift_to(k * width)
        out.append(plus)
        out.append(mirror.after(plus))
    return out


def instantiate_copies(joints: np.ndarray, n: int, frame: OrientationFrame) -> list[np.ndarray]:
    """Place n symmetric copies of a joint array; n = 1 returns it unchanged."""
    return [t.apply(joints) for t in copy_transforms(joints, n, frame)]


# -----------------------------------------------------------------------------
# plans
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class PartDecl:
    ref: PartRef
    copies: int = 1
    symmetric: bool = False


@dataclass(frozen=True)
class Attachment:
    src: JointRef
    dst: JointRef


@dataclass(frozen=True)
class AssemblyPlan:
    parts: tuple[PartDecl, ...]
    ops: tuple[EditOp, ...]
    attachments: tuple[Attachment, ...]


@dataclass(frozen=True)
class AssemblyPart:
    """A classified region lifted out of its source asset, ready to plan with."""

    ref: PartRef
    joints: np.ndarray                 # (m, 3) positions, local indexing
    bones: tuple[tuple[int, int], ...]  # local joint index pairs
    attach_local: int                  # joint shared with the source body
    attach_bone_length: float
    frame: OrientationFrame
    root_local: int = 0
    sockets: dict = field(default_factory=dict)   # label -> [(local joint, bone len)]
    begin_local: Optional[int] = None
    trunk_local: Optional[int] = None

    @property
    def category(self) -> str:
        return self.ref.label

    @property
    def centroid(self) -> np.ndarray:
        return self.joints.mean(axis=0)

    @property
    def size(self) -> np.ndarray:
        return self.joints.max(axis=0) - self.joints.min(axis=0)

    def attributes(self) -> dict:
        return {
            "category": self.category,
            "position": [float(v) for v in self.centroid],
            "size": [float(v) for v in self.size],
            "orientation": [float(v) for v in self.frame.forward],
        }


@dataclass(frozen=True)
class AssembledSkeleton:
    """Merged skeleton plus provenance back to the source parts."""

    skeleton: Skeleton
    part_provenance: tuple          # per joint: (asset, "label/instance", copy index)
    per_part_transform: dict        # (part index, copy index) -> AffineTransform
    parts: tuple[PartDecl, ...]


# -----------------------------------------------------------------------------
# building parts from a classified skeleton
# -----------------------------------------------------------------------------

def build_parts(asset_id: str, partition: SemanticPartition, skeleton: Skeleton,
                frame: OrientationFrame) -> list[AssemblyPart]:
    """Lift every region of a partition into an AssemblyPart.

    The body part carries sockets for every other region: the shared
    attachment joint plus the longest body bone at that joint.
    """
    joint_owners: dict[int, list[Region]] = {}
    for region in partition.regions:
        for j in region.joints:
            joint_owners.setdefault(int(j), []).append(region)

    def bone_pair(k: int) -> tuple[int, int]:
        i, j = skeleton.bones[k]
        return int(i), int(j)

    def longest_bone_at(joint: int, bone_ids) -> float:
        best = 0.0
        for k in sorted(bone_ids):
            i, j = bone_pair(k)
            if joint in (i, j):
                length = float(np.linalg.norm(skeleton.joints[i] - skeleton.joints[j]))
                if length > best:
                    best = length
        return best

    parts: list[AssemblyPart] = []
    body = next((r for r in partition.regions if r.label == "Body"), None)
    for region in partition.regions:
        local = sorted(int(j) for j in region.joints)
        index = {j: i for i, j in enumerate(local)}
        bones = tuple(sorted((min(index[a], index[b]), max(index[a], index[b]))
                             for a, b in (bone_pair(k) for k in sorted(region.bones))))
        shared = sorted(j for j in local if len(joint_owners[j]) > 1)
        if region.label == "Body":
            attach = int(partition.begin_node)
        elif shared:
            attach = shared[0]
        else:
            attach = local[0]
        attach_len = longest_bone_at(attach, region.bones)
        sockets: dict = {}
        begin_local = None
        trunk_local = None
        if region.label == "Body":
            begin_local = index.get(int(partition.begin_node))
            if partition.trunk_junction is not None:
                trunk_local = index.get(int(partition.trunk_junction))
            for other in partition.regions:
                if other is region:
                    continue
                anchors = sorted(set(int(j) for j in other.joints) & set(local))
                if not anchors:
                    continue
                joint = anchors[0]
                sockets.setdefault(other.label.lower(), []).append(
                    (index[joint], longest_bone_at(joint, region.bones)))
        root_local = index.get(attach, 0)
        parts.append(AssemblyPart(
            ref=PartRef(asset_id, region.label.lower(), region.instance_id),
            joints=np.array([skeleton.joints[j] for j in local], dtype=np.float64),
            bones=bones,
            attach_local=index.get(attach, 0),
            attach_bone_length=attach_len,
            frame=frame,
            root_local=root_local,
            sockets=sockets,
            begin_local=begin_local,
            trunk_local=trunk_local,
        ))
    return parts


# -----------------------------------------------------------------------------
# request parsing
# -----------------------------------------------------------------------------

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}
_REGION_WORDS = {"head": "head", "heads": "head", "leg": "leg", "legs": "leg",
                 "wing": "wing", "wings": "wing", "tail": "tail", "tails": "tail"}


def parse_multiplicity(request: str) -> dict[str, int]:
    """Counts adjacent to region words: "two heads" -> {"head": 2}.

    Anything unparsed defaults to one copy downstream.
    """
    tokens = re.findall(r"[a-z0-9]+", request.lower())
    out: dict[str, int] = {}
    for prev, word in zip(tokens, tokens[1:]):
        if word not in _REGION_WORDS:
            continue
        count = _NUMBER_WORDS.get(prev)
        if count is None and prev.isdigit():
            count = int(prev)
        if count is not None and count >= 1:
            out[_REGION_WORDS[word]] = count
    return out


# -----------------------------------------------------------------------------
# planning
# -----------------------------------------------------------------------------

_SOCKET_FALLBACK = {"head": "trunk", "wing": "trunk", "leg": "begin", "tail": "begin"}


def _native_socket(body: AssemblyPart, part: AssemblyPart) -> int:
    """The body-local joint a same-asset part is already attached at."""
    attach_pos = part.joints[part.attach_local]
    dists = np.linalg.norm(body.joints - attach_pos[None, :], axis=1)
    return int(np.argmin(dists))


def plan_assembly(parts: Sequence[AssemblyPart], request: str = "",
                  backend=None) -> AssemblyPlan:
    """Produce a validated AssemblyPlan for the given parts.

    With no backend this is the deterministic rule planner: scale each
    non-body part so its attachment bone matches the body socket bone, align
    its forward axis with the body frame about +y, then translate its
    attachment joint onto the socket joint. A backend, when given, receives
    the parts' structured attributes and must return plan JSON, which is
    validated before being accepted.
    """
    if not parts:
        raise PlanRejected(["no parts supplied"])
    bodies = [p for p in parts if p.category == "body"]
    if len(bodies) != 1:
        raise PlanRejected([f"exactly one body part required, got {len(bodies)}"])
    body = bodies[0]

    if backend is not None:
        from . import formats

        payload = formats.plan_request_payload(parts, request)
        raw = backend.plan(payload)
        plan = formats.plan_from_json(raw)
        violations = validate_plan(plan, parts)
        if violations:
            raise PlanRejected(violations)
        return plan

    counts = parse_multiplicity(request)
    label_totals: dict[str, int] = {}
    for p in parts:
        if p is not body:
            label_totals[p.category] = label_totals.get(p.category, 0) + 1

    decls = [PartDecl(body.ref)]
    ops: list[EditOp] = []
    attachments: list[Attachment] = []
    socket_cursor: dict[str, int] = {}

    for part in parts:
        if part is body:
            continue
        want = counts.get(part.category, 0)
        copies = 1
        if want > 1:
            copies = max(1, -(-want // label_totals[part.category]))  # ceil division
        decls.append(PartDecl(part.ref, copies=copies, symmetric=copies >= 2))

        native = part.ref.asset == body.ref.asset
        if native:
            # the base asset's own regions are already sized and in place;
            # declare and attach them without ops
            attachments.append(Attachment(
                JointRef(body.ref, None, int(_native_socket(body, part))),
                JointRef(part.ref, None, int(part.attach_local)),
            ))
            continue

        sockets = body.sockets.get(part.category, [])
        if sockets:
            cursor = socket_cursor.get(part.category, 0)
            socket_joint, socket_len = sockets[cursor % len(sockets)]
            socket_cursor[part.category] = cursor + 1
        else:
            kind = _SOCKET_FALLBACK.get(part.category, "begin")
            if kind == "trunk" and body.trunk_local is not None:
                socket_joint = body.trunk_local
            else:
                socket_joint = body.begin_local if body.begin_local is not None else 0
            socket_len = body.attach_bone_length
        attach_pos = part.joints[part.attach_local]

        if part.attach_bone_length > 1e-12 and socket_len > 1e-12:
            factor = socket_len / part.attach_bone_length
            if factor != 1.0:
                ops.append(Scale(part.ref, factor, attach_pos))

        pa = math.atan2(float(part.frame.forward[2]), float(part.frame.forward[0]))
        ba = math.atan2(float(body.frame.forward[2]), float(body.frame.forward[0]))
        angle = math.degrees(ba - pa)
        while angle <= -180.0:
            angle += 360.0
        while angle > 180.0:
            angle -= 360.0
        if abs(angle) > 1e-12:
            ops.append(Rotate(part.ref, np.array([0.0, 1.0, 0.0]), attach_pos, angle))

        socket_pos = body.joints[socket_joint]
        delta = socket_pos - attach_pos
        dist = float(np.linalg.norm(delta))
        if dist > 1e-15:
            ops.append(Translate(part.ref, delta / dist, dist))

        attachments.append(Attachment(
            JointRef(body.ref, None, int(socket_joint)),
            JointRef(part.ref, None, int(part.attach_local)),
        ))

    plan = AssemblyPlan(parts=tuple(decls), ops=tuple(ops), attachments=tuple(attachments))
    violations = validate_plan(plan, parts)
    if violations:
        raise PlanRejected(violations)
    return plan


# -----------------------------------------------------------------------------
# validation
# -----------------------------------------------------------------------------

def _resolve_part(ref: JointRef, by_ref: dict, by_label: dict) -> Optional[PartRef]:
    if ref.part is not None:
        return ref.part if ref.part in by_ref else None
    matches = by_label.get(ref.label_only, [])
    return matches[0] if len(matches) == 1 else None


def validate_plan(plan: AssemblyPlan, parts: Sequence[AssemblyPart]) -> list[str]:
    """Every violated invariant, not just the first. Empty list means ok."""
    violations: list[str] = []
    supplied = {p.ref: p for p in parts}
    declared: dict[PartRef, PartDecl] = {}
    by_label: dict[str, list[PartRef]] = {}
    for decl in plan.parts:
        if decl.ref in declared:
            violations.append(f"part {decl.ref} declared twice")
        declared[decl.ref] = decl
        by_label.setdefault(decl.ref.label, []).append(decl.ref)
        if decl.ref not in supplied:
            violations.append(f"declared part {decl.ref} not supplied")
        if decl.copies < 1:
            violations.append(f"copies < 1 for {decl.ref}")
        if decl.symmetric and decl.copies < 2:
            violations.append(f"symmetric placement with copies < 2 for {decl.ref}")

    for op in plan.ops:
        if op.target not in declared:
            violations.append(f"op targets undeclared part {op.target}")
        violations.extend(op.violations())

    edges = []
    for att in plan.attachments:
        ends = []
        for ref in (att.src, att.dst):
            part_ref = _resolve_part(ref, declared, by_label)
            if part_ref is None:
                violations.append(f"attachment references unknown part in {ref}")
                continue
            part = supplied.get(part_ref)
            if part is not None and not (0 <= ref.joint < part.joints.shape[0]):
                violations.append(f"attachment joint out of range in {ref}")
            ends.append(part_ref)
        if len(ends) == 2:
            if ends[0] == ends[1]:
                violations.append(f"attachment connects {ends[0]} to itself")
            else:
                edges.append(tuple(ends))

    # the attachment graph over parts must be a tree
    refs = list(declared)
    if len(refs) > 1 or edges:
        if len(edges) != len(refs) - 1:
            violations.append("attachment graph is not a tree "
                              f"({len(edges)} edges over {len(refs)} parts)")
        parent = {r: r for r in refs}

        def find(r):
            while parent[r] != r:
                parent[r] = parent[parent[r]]
                r = parent[r]
            return r

        cycle = False
        for a, b in edges:
            if a not in parent or b not in parent:
                continue
            ra, rb = find(a), find(b)
            if ra == rb:
                cycle = True
            else:
                parent[ra] = rb
        if cycle:
            violations.append("attachment cycle")
        elif len(edges) == len(refs) - 1 and refs:
            roots = {find(r) for r in refs}
            if len(roots) > 1:
                violations.append("attachment graph disconnected")

    # geometric sanity: transformed parts must stay inside the 2x cube
    if not violations:
        for idx, decl in enumerate(plan.parts):
            part = supplied[decl.ref]
            affine = AffineTransform.identity()
            for op in plan.ops:
                if op.target == decl.ref:
                    affine = op_to_affine(op).after(affine)
            moved = affine.apply(part.joints)
            for copy_t in copy_transforms(moved, decl.copies, _body_frame(parts)):
                placed = copy_t.apply(moved)
                if np.any(np.abs(placed) > 1.0):
                    violations.append(f"part {decl.ref} leaves the 2x canonical cube")
                    break
    return violations


def _body_frame(parts: Sequence[AssemblyPart]) -> OrientationFrame:
    for p in parts:
        if p.category == "body":
            return p.frame
    return parts[0].frame


# -----------------------------------------------------------------------------
# execution
# -----------------------------------------------------------------------------

def execute_plan(parts: Sequence[AssemblyPart], plan: AssemblyPlan) -> AssembledSkeleton:
    """Apply ops, instantiate copies, then add attachment bones."""
    violations = validate_plan(plan, parts)
    if violations:
        raise PlanRejected(violations)
    supplied = {p.ref: p for p in parts}
    by_label: dict[str, list[PartRef]] = {}
    for decl in plan.parts:
        by_label.setdefault(decl.ref.label, []).append(decl.ref)
    frame = _body_frame(parts)

    joints_out: list[np.ndarray] = []
    bones_out: list[tuple[int, int]] = []
    provenance: list[tuple] = []
    per_part_transform: dict = {}
    base: dict[tuple, int] = {}   # (part index, copy index) -> first global joint id
    copy_count: dict[PartRef, int] = {}
    offset = 0
    root_global = 0

    for pidx, decl in enumerate(plan.parts):
        part = supplied[decl.ref]
        affine = AffineTransform.identity()
        for op in plan.ops:
            if op.target == decl.ref:
                affine = op_to_affine(op).after(affine)
        moved = affine.apply(part.joints)
        copies = copy_transforms(moved, decl.copies, frame)
        copy_count[decl.ref] = len(copies)
        for cidx, copy_t in enumerate(copies):
            total = copy_t.after(affine)
            per_part_transform[(pidx, cidx)] = total
            placed = copy_t.apply(moved)
            base[(pidx, cidx)] = offset
            joints_out.append(placed)
            for a, b in part.bones:
                bones_out.append((offset + a, offset + b))
            for local in range(part.joints.shape[0]):
                provenance.append((decl.ref.asset, f"{decl.ref.label}/{decl.ref.instance}", cidx))
            if part.category == "body" and cidx == 0:
                root_global = offset + part.root_local
            offset += part.joints.shape[0]

    decl_index = {decl.ref: i for i, decl in enumerate(plan.parts)}
    for att in plan.attachments:
        src_ref = att.src.part or by_label[att.src.label_only][0]
        dst_ref = att.dst.part or by_label[att.dst.label_only][0]
        si, di = decl_index[src_ref], decl_index[dst_ref]
        for sc in range(copy_count[src_ref]):
            for dc in range(copy_count[dst_ref]):
                bones_out.append((base[(si, sc)] + att.src.joint,
                                  base[(di, dc)] + att.dst.joint))

    joints = np.vstack(joints_out) if joints_out else np.zeros((0, 3))
    # connectivity over the merged graph
    n = joints.shape[0]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in bones_out:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    if n and len({find(v) for v in range(n)}) > 1:
        raise DisconnectedResult("attachments leave the merged skeleton disconnected")

    skeleton = Skeleton(joints=joints, bones=np.array(bones_out, dtype=np.int64).reshape(-1, 2),
                        root=root_global)
    return AssembledSkeleton(
        skeleton=skeleton,
        part_provenance=tuple(provenance),
        per_part_transform=per_part_transform,
        parts=plan.parts,
    )
