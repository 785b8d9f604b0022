"""Procedural creature templates used as deterministic offline fixtures.

Each template is generated from code with a fixed layout: a skeleton with
known per-region ground truth, a tube mesh around the bones with linear-blend
skinning weights, and a sparse latent rasterized from the same tubes with
position-hashed features. Everything is reproducible from (name, seed,
jitter); no binary blobs.

Templates: quadruped (4 legs, tail, head), winged (biped with two wings),
biped (humanoid with raised arms), fish (pure chain; exercises the degenerate
body-only classification path).
"""

from __future__ import annotations

import numpy as np

from .gateway import AssetBundle
from .regions import SkinningMatrix
from .skeleton import Skeleton
from .voxels import SparseLatent

__all__ = [
    "TEMPLATE_NAMES",
    "make_skeleton",
    "make_bundle",
    "template_truth",
    "pseudo_features",
    "recorded_plan",
]

TEMPLATE_NAMES = ("quadruped", "winged", "biped", "fish")

_MESH_RING_POINTS = 6
_MESH_RINGS_PER_BONE = 3
_MESH_RADIUS = 0.035
_SLAT_RESOLUTION = 64
_SLAT_CHANNELS = 8
_SLAT_RADIUS = 0.045


def _templates() -> dict:
    quadruped = {
        "joints": [
            (-0.15, 0.05, 0.00),   # 0 pelvis
            (0.00, 0.14, 0.00),    # 1 spine1
            (0.12, 0.04, 0.00),    # 2 spine2
            (0.25, 0.05, 0.00),    # 3 shoulder
            (0.33, 0.16, 0.00),    # 4 neck
            (0.43, 0.22, 0.00),    # 5 head
            (-0.28, 0.13, 0.00),   # 6 tail1
            (-0.40, 0.15, 0.00),   # 7 tail2
            (0.27, -0.12, 0.19),   # 8 front-left upper
            (0.28, -0.31, 0.20),   # 9 front-left foot
            (0.27, -0.12, -0.19),  # 10 front-right upper
            (0.28, -0.31, -0.20),  # 11 front-right foot
            (-0.17, -0.12, 0.19),  # 12 back-left upper
            (-0.18, -0.31, 0.20),  # 13 back-left foot
            (-0.17, -0.12, -0.19),  # 14 back-right upper
            (-0.18, -0.31, -0.20),  # 15 back-right foot
        ],
        "bones": [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 6), (6, 7),
                  (3, 8), (8, 9), (3, 10), (10, 11),
                  (0, 12), (12, 13), (0, 14), (14, 15)],
        "root": 0,
        "names": ["pelvis", "spine1", "spine2", "shoulder", "neck", "head",
                  "tail1", "tail2", "fl_upper", "fl_foot", "fr_upper", "fr_foot",
                  "bl_upper", "bl_foot", "br_upper", "br_foot"],
        "truth": [
            ("Body", (0, 1, 2, 3)),
            ("Head", (3, 4, 5)),
            ("Tail", (0, 6, 7)),
            ("Leg", (3, 8, 9)),
            ("Leg", (3, 10, 11)),
            ("Leg", (0, 12, 13)),
            ("Leg", (0, 14, 15)),
        ],
    }
    winged = {
        "joints": [
            (-0.26, 0.00, 0.00),   # 0 pelvis
            (-0.24, -0.18, 0.10),  # 1 left upper leg
            (-0.23, -0.36, 0.11),  # 2 left foot
            (-0.24, -0.18, -0.10),  # 3 right upper leg
            (-0.23, -0.36, -0.11),  # 4 right foot
            (-0.10, 0.14, 0.00),   # 5 spine1
            (0.04, 0.18, 0.00),    # 6 chest
            (0.08, 0.33, 0.10),    # 7 left wing mid
            (0.11, 0.40, 0.20),    # 8 left wing tip
            (0.08, 0.33, -0.10),   # 9 right wing mid
            (0.11, 0.40, -0.20),   # 10 right wing tip
            (0.16, 0.30, 0.00),    # 11 neck
            (0.34, 0.34, 0.00),    # 12 head
        ],
        "bones": [(0, 1), (1, 2), (0, 3), (3, 4), (0, 5), (5, 6),
                  (6, 7), (7, 8), (6, 9), (9, 10), (6, 11), (11, 12)],
        "root": 0,
        "names": ["pelvis", "l_upper", "l_foot", "r_upper", "r_foot",
                  "spine1", "chest", "wl_mid", "wl_tip", "wr_mid", "wr_tip",
                  "neck", "head"],
        "truth": [
            ("Body", (0, 5, 6)),
            ("Head", (6, 11, 12)),
            ("Leg", (0, 1, 2)),
            ("Leg", (0, 3, 4)),
            ("Wing", (6, 7, 8)),
            ("Wing", (6, 9, 10)),
        ],
    }
    biped = {
        "joints": [
            (-0.18, 0.00, 0.00),   # 0 pelvis
            (-0.16, -0.20, 0.08),  # 1 left upper leg
            (-0.15, -0.38, 0.085),  # 2 left foot
            (-0.16, -0.20, -0.08),  # 3 right upper leg
            (-0.15, -0.38, -0.085),  # 4 right foot
            (-0.05, 0.12, 0.00),   # 5 spine1
            (0.08, 0.16, 0.00),    # 6 chest
            (0.13, 0.29, 0.09),    # 7 left arm mid
            (0.22, 0.36, 0.14),    # 8 left hand
            (0.13, 0.29, -0.09),   # 9 right arm mid
            (0.22, 0.36, -0.14),   # 10 right hand
            (0.17, 0.31, 0.00),    # 11 neck
            (0.32, 0.36, 0.00),    # 12 head
        ],
        "bones": [(0, 1), (1, 2), (0, 3), (3, 4), (0, 5), (5, 6),
                  (6, 7), (7, 8), (6, 9), (9, 10), (6, 11), (11, 12)],
        "root": 0,
        "names": ["pelvis", "l_upper", "l_foot", "r_upper", "r_foot",
                  "spine1", "chest", "al_mid", "al_hand", "ar_mid", "ar_hand",
                  "neck", "head"],
        "truth": [
            ("Body", (0, 5, 6)),
            ("Head", (6, 11, 12)),
            ("Leg", (0, 1, 2)),
            ("Leg", (0, 3, 4)),
            ("Wing", (6, 7, 8)),
            ("Wing", (6, 9, 10)),
        ],
    }
    fish = {
        "joints": [
            (-0.36, 0.00, 0.02),
            (-0.24, 0.00, -0.015),
            (-0.12, 0.00, 0.015),
            (0.00, 0.00, -0.02),
            (0.12, 0.00, 0.015),
            (0.24, 0.00, -0.015),
            (0.36, 0.00, 0.02),
        ],
        "bones": [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)],
        "root": 0,
        "names": ["snout", "s1", "s2", "s3", "s4", "s5", "tailfin"],
        "truth": [("Body", (0, 1, 2, 3, 4, 5, 6))],
    }
    return {"quadruped": quadruped, "winged": winged, "biped": biped, "fish": fish}


def template_truth(name: str) -> tuple:
    """Ground-truth (label, original joint set) pairs for a template."""
    spec = _templates()[name]
    return tuple((label, frozenset(joints)) for label, joints in spec["truth"])


def make_skeleton(name: str, seed: int = 0, jitter: float = 0.0) -> Skeleton:
    """The template skeleton, optionally jittered.

    jitter bounds the per-joint displacement as a fraction of the bounding-box
    diagonal; each joint moves in a uniform random direction by a magnitude
    drawn uniformly from [0, jitter * diagonal]."""
    spec = _templates()[name]
    joints = np.array(spec["joints"], dtype=np.float64)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        diag = float(np.linalg.norm(joints.max(axis=0) - joints.min(axis=0)))
        dirs = rng.normal(size=joints.shape)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rng.uniform(0.0, 1.0, joints.shape[0])
        joints = joints + dirs * (radii * jitter * diag)[:, None]
    return Skeleton(joints=joints, bones=np.array(spec["bones"], dtype=np.int64),
                    root=spec["root"], joint_names=spec["names"])


# -----------------------------------------------------------------------------
# mesh + skinning
# -----------------------------------------------------------------------------

def _ring_basis(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([0.0, 1.0, 0.0])
    if abs(float(np.dot(direction, ref))) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    u = np.cross(direction, ref)
    u /= np.linalg.norm(u)
    return u, np.cross(direction, u)


def _tube_mesh(skeleton: Skeleton):
    """Rings of vertices around every bone plus linear skinning weights."""
    verts: list[np.ndarray] = []
    faces: list[tuple[int, int, int]] = []
    weights_rows: list[tuple[int, int, float]] = []  # (vertex, joint, t along bone)
    for a, b in skeleton.bones:
        pa, pb = skeleton.joints[int(a)], skeleton.joints[int(b)]
        axis = pb - pa
        length = float(np.linalg.norm(axis))
        direction = axis / length
        u, v = _ring_basis(direction)
        ring_base = []
        for ridx in range(_MESH_RINGS_PER_BONE):
            t = (ridx + 0.5) / _MESH_RINGS_PER_BONE
            center = pa + axis * t
            base = len(verts)
            ring_base.append(base)
            for p in range(_MESH_RING_POINTS):
                ang = 2.0 * np.pi * p / _MESH_RING_POINTS
                verts.append(center + _MESH_RADIUS * (np.cos(ang) * u + np.sin(ang) * v))
                weights_rows.append((len(verts) - 1, int(a), 1.0 - t))
                weights_rows.append((len(verts) - 1, int(b), t))
        for r0, r1 in zip(ring_base, ring_base[1:]):
            for p in range(_MESH_RING_POINTS):
                q = (p + 1) % _MESH_RING_POINTS
                faces.append((r0 + p, r0 + q, r1 + p))
                faces.append((r0 + q, r1 + q, r1 + p))
    w = np.zeros((len(verts), skeleton.num_joints), dtype=np.float64)
    for vi, ji, t in weights_rows:
        w[vi, ji] = t
    # quantize through f32 so the MUSW round trip is lossless object-side too
    w = w.astype(np.float32).astype(np.float64)
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64), w


# -----------------------------------------------------------------------------
# sparse latent rasterization
# -----------------------------------------------------------------------------

def _hash_u64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def pseudo_features(positions: np.ndarray, resolution: int, channels: int,
                    salt: int = 0) -> np.ndarray:
    """Deterministic features in [-1, 1) keyed by voxel position and channel,
    quantized through float32."""
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    n = np.int64(resolution)
    lin = (positions[:, 0] * n + positions[:, 1]) * n + positions[:, 2]
    keys = lin[:, None] * np.int64(channels) + np.arange(channels, dtype=np.int64)[None, :]
    keys = keys + np.int64(salt) * np.int64(0x51ED2701)
    hashed = _hash_u64(keys.astype(np.uint64))
    vals = (hashed >> np.uint64(11)).astype(np.float64) / float(1 << 53) * 2.0 - 1.0
    return vals.astype(np.float32).astype(np.float64)


def _tube_slat(skeleton: Skeleton, name_salt: int) -> SparseLatent:
    n = _SLAT_RESOLUTION
    cells: set[tuple[int, int, int]] = set()
    reach = int(np.ceil(_SLAT_RADIUS * n)) + 1
    offsets = [
        (dx, dy, dz)
        for dx in range(-reach, reach + 1)
        for dy in range(-reach, reach + 1)
        for dz in range(-reach, reach + 1)
    ]
    for a, b in skeleton.bones:
        pa, pb = skeleton.joints[int(a)], skeleton.joints[int(b)]
        length = float(np.linalg.norm(pb - pa))
        steps = max(2, int(length * n * 2))
        for t in np.linspace(0.0, 1.0, steps):
            point = pa + (pb - pa) * t
            cx, cy, cz = np.floor((point + 0.5) * n).astype(int)
            for dx, dy, dz in offsets:
                x, y, z = cx + dx, cy + dy, cz + dz
                if not (0 <= x < n and 0 <= y < n and 0 <= z < n):
                    continue
                center = (np.array([x, y, z], dtype=np.float64) + 0.5) / n - 0.5
                if _point_segment_distance(center, pa, pb) <= _SLAT_RADIUS:
                    cells.add((x, y, z))
    pos = np.array(sorted(cells), dtype=np.int64).reshape(-1, 3)
    feats = pseudo_features(pos, n, _SLAT_CHANNELS, salt=name_salt)
    return SparseLatent(resolution=n, channels=_SLAT_CHANNELS, positions=pos, features=feats)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    t = max(0.0, min(1.0, t))
    return float(np.linalg.norm(p - (a + ab * t)))


# -----------------------------------------------------------------------------
# bundles
# -----------------------------------------------------------------------------

_bundle_cache: dict = {}


def make_bundle(name: str, seed: int = 0, jitter: float = 0.0) -> AssetBundle:
    """The full deterministic asset bundle for a template."""
    if name not in _templates():
        raise KeyError(f"unknown fixture {name!r}; have {', '.join(TEMPLATE_NAMES)}")
    key = (name, seed, round(float(jitter), 12))
    if key in _bundle_cache:
        return _bundle_cache[key]
    skeleton = make_skeleton(name, seed=seed, jitter=jitter)
    verts, faces, weights = _tube_mesh(skeleton)
    skinning = SkinningMatrix(weights=weights,
                              joint_index_map=tuple(range(skeleton.num_joints)))
    salt = sum(ord(c) for c in name) + seed * 1009
    slat = _tube_slat(skeleton, salt)
    bundle = AssetBundle(vertices=verts, faces=faces, skeleton=skeleton,
                         skinning=skinning, slat=slat, prompt=f"a {name} creature")
    _bundle_cache[key] = bundle
    return bundle


def recorded_plan(name: str) -> dict:
    """A canned plan JSON document for fixture-mode plan backends."""
    return {
        "parts": [{"asset": "a0", "region": "body", "instance": 1,
                   "copies": 1, "symmetric": False}],
        "ops": [],
        "attach": [],
    }
