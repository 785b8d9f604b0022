"""Serialization for every artifact the pipeline reads or writes.

Writers are canonical: fixed key order, compact separators, trailing newline.
Reading a file this module wrote and writing it again reproduces the bytes
exactly; binary formats round-trip bit-for-bit.

Formats:
  * skeleton JSON   {"joints": [...], "bones": [...], "root": r, "names": ...}
  * partition JSON  regions with labels, instances, joints, and bones
  * plan JSON       {"parts": [...], "ops": [...], "attach": [...]}
  * MUSW            sparse skinning weights, little-endian binary
  * SLAT            sparse latent, little-endian binary
  * bundle JSON     mesh + skeleton + base64 MUSW + base64 SLAT
"""

from __future__ import annotations

import base64
import json
import struct

import numpy as np

from .errors import FormatError
from .planner import (AssemblyPlan, Attachment, EditOp, JointRef, PartDecl,
                      PartRef, Rotate, Scale, Translate)
from .regions import SkinningMatrix
from .skeleton import Region, SemanticPartition, Skeleton
from .voxels import SparseLatent

__all__ = [
    "dumps_json",
    "skeleton_to_json",
    "skeleton_from_json",
    "partition_to_json",
    "partition_from_json",
    "plan_to_json",
    "plan_from_json",
    "plan_request_payload",
    "write_musw",
    "read_musw",
    "write_slat",
    "read_slat",
    "bundle_to_json",
    "bundle_from_json",
]


def dumps_json(obj) -> bytes:
    """Canonical JSON bytes: insertion key order, compact, newline-terminated."""
    return (json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


# -----------------------------------------------------------------------------
# skeleton JSON
# -----------------------------------------------------------------------------

def skeleton_to_json(s: Skeleton) -> bytes:
    obj = {
        "joints": [[float(v) for v in row] for row in s.joints],
        "bones": [[int(i), int(j)] for i, j in s.bones],
        "root": int(s.root),
        "names": list(s.joint_names) if s.joint_names is not None else None,
    }
    return dumps_json(obj)


def skeleton_from_json(data: bytes | str) -> Skeleton:
    try:
        obj = json.loads(data)
        return Skeleton(
            joints=np.asarray(obj["joints"], dtype=np.float64).reshape(-1, 3),
            bones=np.asarray(obj["bones"], dtype=np.int64).reshape(-1, 2),
            root=int(obj["root"]),
            joint_names=obj.get("names"),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad skeleton JSON: {exc}") from exc


# -----------------------------------------------------------------------------
# partition JSON
# -----------------------------------------------------------------------------

def partition_to_json(p: SemanticPartition) -> bytes:
    obj = {
        "regions": [
            {
                "label": r.label,
                "instance": r.instance_id,
                "joints": sorted(int(j) for j in r.joints),
                "bones": sorted(int(b) for b in r.bones),
            }
            for r in p.regions
        ],
        "begin": int(p.begin_node),
        "trunk": int(p.trunk_junction) if p.trunk_junction is not None else None,
    }
    return dumps_json(obj)


def partition_from_json(data: bytes | str) -> SemanticPartition:
    try:
        obj = json.loads(data)
        regions = tuple(
            Region(r["label"], int(r["instance"]),
                   frozenset(int(j) for j in r["joints"]),
                   frozenset(int(b) for b in r["bones"]))
            for r in obj["regions"]
        )
        trunk = obj.get("trunk")
        return SemanticPartition(regions=regions, begin_node=int(obj["begin"]),
                                 trunk_junction=int(trunk) if trunk is not None else None)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad partition JSON: {exc}") from exc


# -----------------------------------------------------------------------------
# plan JSON (the planner wire contract)
# -----------------------------------------------------------------------------

def _op_to_obj(op: EditOp) -> dict:
    if isinstance(op, Rotate):
        return {"type": "rotate", "target": str(op.target),
                "axis": [float(v) for v in op.axis],
                "pivot": [float(v) for v in op.pivot],
                "angle_deg": float(op.angle_deg)}
    if isinstance(op, Translate):
        return {"type": "translate", "target": str(op.target),
                "dir": [float(v) for v in op.direction],
                "dist": float(op.distance)}
    if isinstance(op, Scale):
        return {"type": "scale", "target": str(op.target),
                "factor": float(op.factor),
                "pivot": [float(v) for v in op.pivot]}
    raise TypeError(f"not an edit op: {op!r}")


def op_from_obj(obj: dict) -> EditOp:
    kind = obj.get("type")
    target = PartRef.parse(obj["target"])
    if kind == "rotate":
        return Rotate(target, np.asarray(obj["axis"], dtype=np.float64),
                      np.asarray(obj["pivot"], dtype=np.float64), float(obj["angle_deg"]))
    if kind == "translate":
        return Translate(target, np.asarray(obj["dir"], dtype=np.float64),
                         float(obj["dist"]))
    if kind == "scale":
        return Scale(target, float(obj["factor"]),
                     np.asarray(obj["pivot"], dtype=np.float64))
    raise ValueError(f"unknown op type {kind!r}")


def plan_to_json(plan: AssemblyPlan) -> bytes:
    obj = {
        "parts": [
            {"asset": d.ref.asset, "region": d.ref.label, "instance": d.ref.instance,
             "copies": d.copies, "symmetric": d.symmetric}
            for d in plan.parts
        ],
        "ops": [_op_to_obj(op) for op in plan.ops],
        "attach": [{"from": str(a.src), "to": str(a.dst)} for a in plan.attachments],
    }
    return dumps_json(obj)


def plan_from_json(data) -> AssemblyPlan:
    try:
        obj = json.loads(data) if isinstance(data, (str, bytes)) else data
        parts = tuple(
            PartDecl(PartRef(p["asset"], p["region"].lower(), int(p["instance"])),
                     copies=int(p.get("copies", 1)),
                     symmetric=bool(p.get("symmetric", False)))
            for p in obj["parts"]
        )
        ops = tuple(op_from_obj(o) for o in obj.get("ops", []))
        attach = tuple(
            Attachment(JointRef.parse(a["from"]), JointRef.parse(a["to"]))
            for a in obj.get("attach", [])
        )
        return AssemblyPlan(parts=parts, ops=ops, attachments=attach)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad plan JSON: {exc}") from exc


def plan_request_payload(parts, request: str) -> dict:
    """The planner backend request: plan schema plus request text and
    structured part attributes."""
    return {
        "parts": [
            {"asset": p.ref.asset, "region": p.ref.label, "instance": p.ref.instance,
             "copies": 1, "symmetric": False}
            for p in parts
        ],
        "ops": [],
        "attach": [],
        "request": request,
        "attributes": [p.attributes() for p in parts],
    }


# -----------------------------------------------------------------------------
# MUSW: sparse skinning weights
#
# magic "MUSW", u8 version, u32 Q, u32 J, u32 entry count, then entries of
# (u32 vertex, u32 joint, f32 weight) sorted by (vertex, joint). All little
# endian. Weights quantize to f32 on write; exact zeros are omitted. Columns
# are the skeleton's joints in order, so readers get an identity joint map.
# -----------------------------------------------------------------------------

_MUSW_MAGIC = b"MUSW"
_MUSW_VERSION = 1


def write_musw(m: SkinningMatrix) -> bytes:
    w32 = m.weights.astype(np.float32)
    vi, ji = np.nonzero(w32)
    header = _MUSW_MAGIC + struct.pack("<BIII", _MUSW_VERSION,
                                       m.num_vertices, m.num_joints, vi.shape[0])
    entries = np.empty(vi.shape[0], dtype=[("v", "<u4"), ("j", "<u4"), ("w", "<f4")])
    entries["v"] = vi
    entries["j"] = ji
    entries["w"] = w32[vi, ji]
    return header + entries.tobytes()


def read_musw(data: bytes) -> SkinningMatrix:
    if data[:4] != _MUSW_MAGIC:
        raise FormatError("not a MUSW payload")
    version, q, j, count = struct.unpack_from("<BIII", data, 4)
    if version != _MUSW_VERSION:
        raise FormatError(f"unsupported MUSW version {version}")
    offset = 4 + 13
    if len(data) != offset + count * 12:
        raise FormatError("MUSW payload size mismatch")
    entries = np.frombuffer(data, dtype=[("v", "<u4"), ("j", "<u4"), ("w", "<f4")],
                            count=count, offset=offset)
    if np.any(entries["v"] >= q) or np.any(entries["j"] >= j):
        raise FormatError("MUSW entry index out of range")
    w = np.zeros((q, j), dtype=np.float64)
    w[entries["v"], entries["j"]] = entries["w"].astype(np.float64)
    return SkinningMatrix(weights=w, joint_index_map=tuple(range(j)))


# -----------------------------------------------------------------------------
# SLAT: sparse latent
#
# magic "SLAT", u8 version, u16 N, u16 C, u32 L, then L position triples of
# u16 each, then L*C f32 features. All little endian.
# -----------------------------------------------------------------------------

_SLAT_MAGIC = b"SLAT"
_SLAT_VERSION = 1


def write_slat(s: SparseLatent) -> bytes:
    header = _SLAT_MAGIC + struct.pack("<BHHI", _SLAT_VERSION, s.resolution,
                                       s.channels, s.num_voxels)
    pos = s.positions.astype("<u2").tobytes()
    feat = s.features.astype("<f4").tobytes()
    return header + pos + feat


def read_slat(data: bytes) -> SparseLatent:
    if data[:4] != _SLAT_MAGIC:
        raise FormatError("not a SLAT payload")
    version, n, c, l = struct.unpack_from("<BHHI", data, 4)
    if version != _SLAT_VERSION:
        raise FormatError(f"unsupported SLAT version {version}")
    offset = 4 + 9
    pos = np.frombuffer(data, dtype="<u2", count=l * 3, offset=offset).reshape(l, 3)
    offset += l * 6
    feat = np.frombuffer(data, dtype="<f4", count=l * c, offset=offset).reshape(l, c)
    if len(data) != offset + l * c * 4:
        raise FormatError("SLAT payload has trailing bytes")
    return SparseLatent(resolution=n, channels=c,
                        positions=pos.astype(np.int64),
                        features=feat.astype(np.float64))


# -----------------------------------------------------------------------------
# asset bundles (mesh + skeleton + rig + latent in one JSON document)
# -----------------------------------------------------------------------------

def bundle_to_json(bundle) -> bytes:
    obj = {
        "prompt": bundle.prompt,
        "mesh": {
            "vertices": [[float(v) for v in row] for row in bundle.vertices],
            "faces": [[int(i) for i in row] for row in bundle.faces],
        },
        "skeleton": json.loads(skeleton_to_json(bundle.skeleton)),
        "skinning": base64.b64encode(write_musw(bundle.skinning)).decode("ascii"),
        "slat": base64.b64encode(write_slat(bundle.slat)).decode("ascii"),
    }
    return dumps_json(obj)


def bundle_from_json(data):
    from .gateway import AssetBundle

    try:
        obj = json.loads(data) if isinstance(data, (str, bytes)) else data
        return AssetBundle(
            vertices=np.asarray(obj["mesh"]["vertices"], dtype=np.float64).reshape(-1, 3),
            faces=np.asarray(obj["mesh"]["faces"], dtype=np.int64).reshape(-1, 3),
            skeleton=skeleton_from_json(json.dumps(obj["skeleton"])),
            skinning=read_musw(base64.b64decode(obj["skinning"])),
            slat=read_slat(base64.b64decode(obj["slat"])),
            prompt=obj.get("prompt", ""),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad bundle JSON: {exc}") from exc
