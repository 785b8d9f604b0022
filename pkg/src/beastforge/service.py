"""Local HTTP service exposing the pipeline for interactive composer UIs.

Sessions are isolated; every mutating call takes the session's lock, is
re-validated, and bumps a strictly monotone revision counter. Reads may run
concurrently. Artifacts are immutable blobs addressed by sha256.

Routes (JSON bodies):
  POST /sessions                     -> {"id": ...}
  POST /sessions/{id}/assets        {"fixture": name} | {"bundle": {...}}
  POST /sessions/{id}/classify      -> partitions per asset
  POST /sessions/{id}/plan          {"request": text} | {"plan": {...}}
  POST /sessions/{id}/ops           single op object -> updated skeleton
  GET  /sessions/{id}/preview       -> skeleton + coarse occupancy RLE
  POST /sessions/{id}/compose       -> {"artifact": hash, "href": ...}
  POST /sessions/{id}/style         {"style_prompt": text}
  GET  /artifacts/{hash}            -> artifact bytes

Error mapping: 400 invalid plan or payload, 404 unknown session,
502 backend failure, 504 backend timeout.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

import numpy as np

from . import formats, gateway, pipeline
from .errors import (BackendUnavailable, BeastForgeError, FormatError,
                     PlanRejected)
from .planner import AssemblyPlan, execute_plan, plan_assembly, validate_plan
from .voxels import CompositionConfig, downsample_to_coarse, transform_voxels

__all__ = ["ComposerService", "serve"]


@dataclass
class _Session:
    sid: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    revision: int = 0
    assets: list = field(default_factory=list)          # list[pipeline.AssetState]
    parts: list = field(default_factory=list)
    latents: dict = field(default_factory=dict)
    plan: Optional[AssemblyPlan] = None
    assembled: object = None

    def bump(self) -> int:
        self.revision += 1
        return self.revision


class _HttpError(Exception):
    def __init__(self, status: int, message: str, extra: dict | None = None):
        self.status = status
        self.payload = {"error": message}
        if extra:
            self.payload.update(extra)
        super().__init__(message)


class ComposerService:
    """All session and artifact state, independent of the HTTP layer."""

    def __init__(self, composition: CompositionConfig = CompositionConfig()):
        self._sessions: dict[str, _Session] = {}
        self._artifacts: dict[str, bytes] = {}
        self._global = threading.Lock()
        self.composition = composition

    # -- sessions ------------------------------------------------------------

    def create_session(self) -> dict:
        sid = uuid.uuid4().hex[:12]
        with self._global:
            self._sessions[sid] = _Session(sid=sid)
        return {"id": sid}

    def _session(self, sid: str) -> _Session:
        with self._global:
            session = self._sessions.get(sid)
        if session is None:
            raise _HttpError(404, f"unknown session {sid}")
        return session

    def add_asset(self, sid: str, body: dict) -> dict:
        session = self._session(sid)
        if "fixture" in body:
            source = f"fixture:{body['fixture']}"
            bundle = gateway.generate_asset("", gateway.BackendConfig(endpoint=source))
        elif "bundle" in body:
            try:
                bundle = formats.bundle_from_json(body["bundle"])
            except FormatError as exc:
                raise _HttpError(400, str(exc))
        else:
            raise _HttpError(400, "expected 'fixture' or 'bundle'")
        with session.lock:
            asset_id = f"a{len(session.assets)}"
            try:
                state = pipeline.prepare_asset(asset_id, bundle)
            except BeastForgeError as exc:
                raise _HttpError(400, f"asset rejected: {exc}")
            session.assets.append(state)
            session.latents.update(pipeline.region_latents_for(state))
            session.plan = None
            session.assembled = None
            rev = session.bump()
        return {"asset": asset_id, "revision": rev}

    def classify(self, sid: str) -> dict:
        session = self._session(sid)
        out = []
        for state in session.assets:
            out.append({
                "asset": state.asset_id,
                "partition": json.loads(formats.partition_to_json(state.partition)),
            })
        return {"assets": out, "revision": session.revision}

    def set_plan(self, sid: str, body: dict) -> dict:
        session = self._session(sid)
        with session.lock:
            if not session.assets:
                raise _HttpError(400, "no assets loaded")
            try:
                if "plan" in body:
                    parts = pipeline.select_parts(session.assets,
                                                  body.get("request", "")) \
                        if body.get("request") else self._all_parts(session)
                    plan = formats.plan_from_json(body["plan"])
                    violations = validate_plan(plan, parts)
                    if violations:
                        raise _HttpError(400, "invalid plan",
                                         {"violations": violations})
                else:
                    request = body.get("request", "")
                    parts = pipeline.select_parts(session.assets, request)
                    plan = plan_assembly(parts, request)
            except PlanRejected as exc:
                raise _HttpError(400, "invalid plan", {"violations": exc.violations})
            except FormatError as exc:
                raise _HttpError(400, str(exc))
            session.parts = parts
            session.plan = plan
            session.assembled = execute_plan(parts, plan)
            rev = session.bump()
        return {"plan": json.loads(formats.plan_to_json(plan)), "revision": rev}

    def _all_parts(self, session: _Session) -> list:
        parts = []
        for state in session.assets:
            parts.extend(state.parts)
        return parts

    def apply_op(self, sid: str, body: dict) -> dict:
        session = self._session(sid)
        with session.lock:
            if session.plan is None:
                raise _HttpError(400, "no plan set; POST /plan first")
            try:
                op = formats.op_from_obj(body)
            except (KeyError, ValueError) as exc:
                raise _HttpError(400, f"bad op: {exc}")
            candidate = AssemblyPlan(parts=session.plan.parts,
                                     ops=session.plan.ops + (op,),
                                     attachments=session.plan.attachments)
            violations = validate_plan(candidate, session.parts)
            if violations:
                raise _HttpError(400, "invalid op", {"violations": violations})
            session.plan = candidate
            session.assembled = execute_plan(session.parts, candidate)
            rev = session.bump()
            skeleton_obj = json.loads(
                formats.skeleton_to_json(session.assembled.skeleton))
        return {"revision": rev, "skeleton": skeleton_obj}

    def preview(self, sid: str) -> dict:
        session = self._session(sid)
        with session.lock:
            if session.assembled is None:
                raise _HttpError(400, "no plan executed yet")
            skeleton_obj = json.loads(
                formats.skeleton_to_json(session.assembled.skeleton))
            occupancy, d = self._coarse_occupancy(session)
            rev = session.revision
        return {"skeleton": skeleton_obj, "resolution": d,
                "occupancy_rle": occupancy, "revision": rev}

    def _coarse_occupancy(self, session: _Session):
        transformed = []
        for (pidx, cidx), affine in sorted(session.assembled.per_part_transform.items()):
            decl = session.assembled.parts[pidx]
            latent = session.latents.get(str(decl.ref))
            if latent is None or latent.is_empty:
                continue
            transformed.append(transform_voxels(latent, affine))
        if not transformed:
            return [0, 0], 0
        grid = downsample_to_coarse(transformed, self.composition.coarse_factor)
        # run-length encoding over x-major flattening, starting with a
        # zero-run (possibly empty): [n0_zeros, n1_ones, n2_zeros, ...]
        flat = grid.occupancy.reshape(-1).astype(np.int8)
        runs = []
        current, count = 0, 0
        for v in flat:
            if int(v) == current:
                count += 1
            else:
                runs.append(count)
                current, count = int(v), 1
        runs.append(count)
        return runs, grid.resolution

    def compose_session(self, sid: str) -> dict:
        session = self._session(sid)
        with session.lock:
            if session.assembled is None:
                raise _HttpError(400, "no plan executed yet")
            try:
                composed = pipeline.compose_from_plan(session.assembled,
                                                      session.latents,
                                                      self.composition)
            except BeastForgeError as exc:
                raise _HttpError(400, f"compose failed: {exc}")
            blob = formats.write_slat(composed.latent)
            digest = hashlib.sha256(blob).hexdigest()
            with self._global:
                self._artifacts[digest] = blob
            rev = session.bump()
        return {"artifact": digest, "href": f"/artifacts/{digest}",
                "seam_voxels": int(composed.seam_mask.shape[0]), "revision": rev}

    def style(self, sid: str, body: dict) -> dict:
        session = self._session(sid)
        edit_endpoint = os.environ.get(gateway.ENV_IMGEDIT_ENDPOINT)
        regen_endpoint = os.environ.get(gateway.ENV_GEN3D_ENDPOINT)
        if not edit_endpoint or not regen_endpoint:
            raise _HttpError(502, "style backends not configured "
                             f"({gateway.ENV_IMGEDIT_ENDPOINT}, {gateway.ENV_GEN3D_ENDPOINT})")
        with session.lock:
            if session.assembled is None:
                raise _HttpError(400, "no plan executed yet")
            try:
                composed = pipeline.compose_from_plan(session.assembled,
                                                      session.latents,
                                                      self.composition)
                reference = pipeline.render_occupancy(
                    composed, self.composition.coarse_factor)
                edited = gateway.edit_image(
                    gateway.EditRequest(image=reference,
                                        positive_prompt=body.get("style_prompt", "")),
                    gateway.BackendConfig(endpoint=edit_endpoint))
                styled = gateway.regenerate_features(
                    edited, composed.latent.positions, composed.latent.resolution,
                    gateway.BackendConfig(endpoint=regen_endpoint),
                    channels=composed.latent.channels)
            except BackendUnavailable as exc:
                status = 504 if "timed out" in str(exc).lower() else 502
                raise _HttpError(status, str(exc))
            except BeastForgeError as exc:
                raise _HttpError(502, str(exc))
            blob = formats.write_slat(styled)
            digest = hashlib.sha256(blob).hexdigest()
            with self._global:
                self._artifacts[digest] = blob
            rev = session.bump()
        return {"artifact": digest, "href": f"/artifacts/{digest}", "revision": rev}

    def artifact(self, digest: str) -> bytes:
        with self._global:
            blob = self._artifacts.get(digest)
        if blob is None:
            raise _HttpError(404, "unknown artifact")
        return blob


# -----------------------------------------------------------------------------
# HTTP layer
# -----------------------------------------------------------------------------

_SESSION_ROUTE = re.compile(
    r"^/sessions/([0-9a-f]+)/(assets|classify|plan|ops|preview|compose|style)$")
_ARTIFACT_ROUTE = re.compile(r"^/artifacts/([0-9a-f]{64})$")


def _make_handler(service: ComposerService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet by default
            pass

        def _json(self, status: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise _HttpError(400, f"bad JSON body: {exc}")

        def _dispatch(self, method: str):
            try:
                if method == "POST" and self.path == "/sessions":
                    return self._json(200, service.create_session())
                match = _ARTIFACT_ROUTE.match(self.path)
                if match and method == "GET":
                    blob = service.artifact(match.group(1))
                    self.send_response(200)
                    self.send_header("Content-Type", "application/octet-stream")
                    self.send_header("Content-Length", str(len(blob)))
                    self.end_headers()
                    self.wfile.write(blob)
                    return
                match = _SESSION_ROUTE.match(self.path)
                if not match:
                    raise _HttpError(404, f"no route {method} {self.path}")
                sid, action = match.groups()
                if method == "GET":
                    if action == "preview":
                        return self._json(200, service.preview(sid))
                    if action == "classify":
                        return self._json(200, service.classify(sid))
                    raise _HttpError(404, f"no route GET {self.path}")
                body = self._body()
                if action == "assets":
                    return self._json(200, service.add_asset(sid, body))
                if action == "classify":
                    return self._json(200, service.classify(sid))
                if action == "plan":
                    return self._json(200, service.set_plan(sid, body))
                if action == "ops":
                    return self._json(200, service.apply_op(sid, body))
                if action == "compose":
                    return self._json(200, service.compose_session(sid))
                if action == "style":
                    return self._json(200, service.style(sid, body))
                raise _HttpError(404, f"no route {method} {self.path}")
            except _HttpError as exc:
                self._json(exc.status, exc.payload)
            except Exception as exc:   # pragma: no cover - last resort
                self._json(500, {"error": f"internal error: {exc}"})

        def do_POST(self):
            self._dispatch("POST")

        def do_GET(self):
            self._dispatch("GET")

    return Handler


def serve(bind: str = "127.0.0.1", port: int = 8787,
          service: ComposerService | None = None) -> ThreadingHTTPServer:
    """Start the composer service; returns the running server object."""
    service = service or ComposerService()
    server = ThreadingHTTPServer((bind, port), _make_handler(service))
    server.service = service
    return server
