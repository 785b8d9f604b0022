"""Uniform client interfaces for every external neural or remote service:
text-to-3D generation, auto-rigging, plan reasoning, image editing, and
second-stage feature regeneration.

Each operation works against either a remote JSON-over-HTTP endpoint or a
deterministic offline fixture (endpoint "fixture:<name>"), so the whole
engine is testable with no model weights. API keys are read from the
environment at call time and never logged or stored.

Environment variables: MUSES_LLM_ENDPOINT, MUSES_LLM_API_KEY,
MUSES_GEN3D_ENDPOINT, MUSES_IMGEDIT_ENDPOINT.
"""

from __future__ import annotations

import base64
import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import formats
from .bitmap import decode_png, encode_png
from .errors import (BackendUnavailable, MalformedResponse, PlanRejected,
                     StructureViolation)
from .planner import AssemblyPlan, validate_plan
from .regions import SkinningMatrix
from .skeleton import Skeleton
from .voxels import SparseLatent

__all__ = [
    "ENV_LLM_ENDPOINT",
    "ENV_LLM_API_KEY",
    "ENV_GEN3D_ENDPOINT",
    "ENV_IMGEDIT_ENDPOINT",
    "BackendConfig",
    "EditRequest",
    "AssetBundle",
    "generate_asset",
    "rig_asset",
    "plan_ops",
    "edit_image",
    "regenerate_features",
    "LlmPlanBackend",
    "FixturePlanBackend",
]

ENV_LLM_ENDPOINT = "MUSES_LLM_ENDPOINT"
ENV_LLM_API_KEY = "MUSES_LLM_API_KEY"
ENV_GEN3D_ENDPOINT = "MUSES_GEN3D_ENDPOINT"
ENV_IMGEDIT_ENDPOINT = "MUSES_IMGEDIT_ENDPOINT"

_FIXTURE_PREFIX = "fixture:"


@dataclass(frozen=True)
class BackendConfig:
    """Where a backend lives and the generation knobs forwarded to it."""

    endpoint: str
    api_key_env: Optional[str] = None
    timeout: float = 30.0
    guidance_scale: float = 5.0
    sampling_steps: int = 25

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if not self.guidance_scale > 0:
            raise ValueError("guidance_scale must be positive")
        if self.sampling_steps < 1:
            raise ValueError("sampling_steps must be >= 1")

    @property
    def fixture_name(self) -> Optional[str]:
        if self.endpoint.startswith(_FIXTURE_PREFIX):
            return self.endpoint[len(_FIXTURE_PREFIX):]
        return None


@dataclass(frozen=True)
class EditRequest:
    """An image-editing request: bitmap plus positive/negative prompts."""

    image: np.ndarray              # (H, W, 4) uint8
    positive_prompt: str
    negative_prompt: str = ""
    extra_params: dict = field(default_factory=dict)

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.uint8)
        if img.ndim != 3 or img.shape[2] != 4 or img.size == 0:
            raise ValueError("image must be a non-empty (H, W, 4) RGBA array")
        object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class AssetBundle:
    """Everything the pipeline needs about one source asset."""

    vertices: np.ndarray
    faces: np.ndarray
    skeleton: Skeleton
    skinning: SkinningMatrix
    slat: SparseLatent
    prompt: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.skinning.num_vertices != v.shape[0]:
            raise ValueError("skinning row count must equal mesh vertex count")
        if self.skinning.num_joints != self.skeleton.num_joints:
            raise ValueError("skinning column count must equal skeleton joint count")


# -----------------------------------------------------------------------------
# transport
# -----------------------------------------------------------------------------

def _post_json(cfg: BackendConfig, payload: dict) -> dict:
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(cfg.endpoint, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
            raw = resp.read()
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise BackendUnavailable(f"backend {cfg.endpoint} unreachable: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"backend returned non-JSON: {exc}") from exc


# -----------------------------------------------------------------------------
# operations
# -----------------------------------------------------------------------------

def generate_asset(prompt: str, cfg: BackendConfig) -> AssetBundle:
    """Text-to-3D: a full asset bundle from the backend or a named fixture."""
    if not prompt and cfg.fixture_name is None:
        raise ValueError("prompt must be non-empty")
    name = cfg.fixture_name
    if name is not None:
        from . import fixtures

        return fixtures.make_bundle(name)
    payload = {
        "prompt": prompt,
        "guidance_scale": cfg.guidance_scale,
        "sampling_steps": cfg.sampling_steps,
    }
    obj = _post_json(cfg, payload)
    try:
        return formats.bundle_from_json(obj)
    except Exception as exc:
        raise MalformedResponse(f"bad asset bundle: {exc}") from exc


def rig_asset(vertices: np.ndarray, faces: np.ndarray,
              cfg: BackendConfig) -> tuple[Skeleton, SkinningMatrix]:
    """Auto-rigging: skeleton plus skinning weights for a mesh."""
    name = cfg.fixture_name
    if name is not None:
        from . import fixtures

        bundle = fixtures.make_bundle(name)
        return bundle.skeleton, bundle.skinning
    payload = {
        "vertices": [[float(v) for v in row] for row in np.asarray(vertices).reshape(-1, 3)],
        "faces": [[int(i) for i in row] for row in np.asarray(faces).reshape(-1, 3)],
    }
    obj = _post_json(cfg, payload)
    try:
        skeleton = formats.skeleton_from_json(json.dumps(obj["skeleton"]))
        skinning = formats.read_musw(base64.b64decode(obj["skinning"]))
    except Exception as exc:
        raise MalformedResponse(f"bad rig response: {exc}") from exc
    if skinning.num_vertices != np.asarray(vertices).reshape(-1, 3).shape[0]:
        raise MalformedResponse("rig response vertex count mismatch")
    return skeleton, skinning


def plan_ops(payload: dict, cfg: BackendConfig, parts=None) -> AssemblyPlan:
    """Plan reasoning: the backend's plan JSON, validated before return."""
    name = cfg.fixture_name
    if name is not None:
        from . import fixtures

        obj = fixtures.recorded_plan(name)
    else:
        obj = _post_json(cfg, payload)
    if not isinstance(obj, dict) or "ops" not in obj or "parts" not in obj:
        raise MalformedResponse("plan response missing parts/ops")
    plan = formats.plan_from_json(obj)
    if parts is not None:
        violations = validate_plan(plan, parts)
        if violations:
            raise PlanRejected(violations)
    return plan


def edit_image(req: EditRequest, cfg: BackendConfig) -> np.ndarray:
    """Image editing; the fixture is the identity edit."""
    if cfg.fixture_name is not None:
        return req.image.copy()
    payload = {
        "image": base64.b64encode(encode_png(req.image)).decode("ascii"),
        "positive_prompt": req.positive_prompt,
        "negative_prompt": req.negative_prompt,
        "extra_params": req.extra_params,
        "guidance_scale": cfg.guidance_scale,
        "sampling_steps": cfg.sampling_steps,
    }
    obj = _post_json(cfg, payload)
    try:
        return decode_png(base64.b64decode(obj["image"]))
    except Exception as exc:
        raise MalformedResponse(f"bad edited image: {exc}") from exc


def regenerate_features(image: np.ndarray, positions: np.ndarray, resolution: int,
                        cfg: BackendConfig, channels: int = 8) -> SparseLatent:
    """Second-stage feature prediction for a fixed voxel structure.

    The returned latent must cover exactly the requested positions; anything
    else is a StructureViolation."""
    positions = np.asarray(positions, dtype=np.int64).reshape(-1, 3)
    if positions.size and (positions.min() < 0 or positions.max() >= resolution):
        raise ValueError("positions out of range for resolution")
    if cfg.fixture_name is not None:
        from . import fixtures

        feats = fixtures.pseudo_features(positions, resolution, channels)
        return SparseLatent(resolution=resolution, channels=channels,
                            positions=positions, features=feats)
    payload = {
        "image": base64.b64encode(encode_png(np.asarray(image, dtype=np.uint8))).decode("ascii"),
        "positions": [[int(v) for v in row] for row in positions],
        "resolution": int(resolution),
        "guidance_scale": cfg.guidance_scale,
        "sampling_steps": cfg.sampling_steps,
    }
    obj = _post_json(cfg, payload)
    try:
        latent = formats.read_slat(base64.b64decode(obj["slat"]))
    except Exception as exc:
        raise MalformedResponse(f"bad latent response: {exc}") from exc
    want = {tuple(p) for p in positions.tolist()}
    got = {tuple(p) for p in latent.positions.tolist()}
    if want != got:
        raise StructureViolation("backend changed the voxel position set")
    return latent


# -----------------------------------------------------------------------------
# plan backends (objects the planner can call)
# -----------------------------------------------------------------------------

class LlmPlanBackend:
    """Remote plan reasoning over the wire schema."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg

    def plan(self, payload: dict) -> dict:
        obj = _post_json(self.cfg, payload)
        if not isinstance(obj, dict) or "ops" not in obj or "parts" not in obj:
            raise MalformedResponse("plan response missing parts/ops")
        return obj

    @classmethod
    def from_env(cls, timeout: float = 30.0) -> Optional["LlmPlanBackend"]:
        endpoint = os.environ.get(ENV_LLM_ENDPOINT)
        if not endpoint:
            return None
        return cls(BackendConfig(endpoint=endpoint, api_key_env=ENV_LLM_API_KEY,
                                 timeout=timeout))


class FixturePlanBackend:
    """Replays a recorded plan JSON document."""

    def __init__(self, recorded: dict):
        self.recorded = recorded

    def plan(self, payload: dict) -> dict:
        return self.recorded
