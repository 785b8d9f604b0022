import base64
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from beastforge import fixtures, formats, gateway
from beastforge.bitmap import encode_png
from beastforge.errors import (BackendUnavailable, MalformedResponse,
                               PlanRejected, StructureViolation)
from beastforge.gateway import BackendConfig, EditRequest
from beastforge.pipeline import prepare_asset


class _StubBackend:
    """A tiny local HTTP backend that records requests and replays a canned
    response."""

    def __init__(self, response: dict, status: int = 200):
        self.response = response
        self.status = status
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length") or 0)
                outer.requests.append(json.loads(self.rfile.read(length)))
                outer.headers.append(dict(self.headers))
                body = json.dumps(outer.response).encode()
                self.send_response(outer.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/"

    def close(self):
        self.server.shutdown()


# -----------------------------------------------------------------------------
# config
# -----------------------------------------------------------------------------

def test_backend_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(endpoint="fixture:fish", timeout=0)
    with pytest.raises(ValueError):
        BackendConfig(endpoint="fixture:fish", guidance_scale=0)
    with pytest.raises(ValueError):
        BackendConfig(endpoint="fixture:fish", sampling_steps=0)
    cfg = BackendConfig(endpoint="fixture:fish")
    assert cfg.guidance_scale == 5.0 and cfg.sampling_steps == 25
    assert cfg.fixture_name == "fish"


# -----------------------------------------------------------------------------
# fixture mode
# -----------------------------------------------------------------------------

def test_generate_asset_fixture_deterministic_bytes():
    cfg = BackendConfig(endpoint="fixture:quadruped")
    a = formats.bundle_to_json(gateway.generate_asset("", cfg))
    b = formats.bundle_to_json(gateway.generate_asset("", cfg))
    assert a == b


def test_generate_asset_fish_degenerate_path():
    bundle = gateway.generate_asset("", BackendConfig(endpoint="fixture:fish"))
    state = prepare_asset("a0", bundle)
    assert [r.label for r in state.partition.regions] == ["Body"]


def test_generate_asset_unknown_fixture():
    with pytest.raises(KeyError):
        gateway.generate_asset("", BackendConfig(endpoint="fixture:gryphon"))


def test_generate_asset_unreachable_endpoint():
    cfg = BackendConfig(endpoint="http://127.0.0.1:9/", timeout=0.5)
    with pytest.raises(BackendUnavailable):
        gateway.generate_asset("a tiger", cfg)


def test_rig_asset_fixture_and_musw_roundtrip():
    bundle = fixtures.make_bundle("biped")
    skeleton, skinning = gateway.rig_asset(bundle.vertices, bundle.faces,
                                           BackendConfig(endpoint="fixture:biped"))
    assert skeleton.num_joints == bundle.skeleton.num_joints
    blob = formats.write_musw(skinning)
    assert formats.write_musw(formats.read_musw(blob)) == blob


def test_edit_image_fixture_identity():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (8, 8, 4), dtype=np.uint8)
    out = gateway.edit_image(EditRequest(image=img, positive_prompt="style"),
                             BackendConfig(endpoint="fixture:any"))
    assert np.array_equal(out, img)


def test_edit_request_rejects_empty_image():
    with pytest.raises(ValueError):
        EditRequest(image=np.zeros((0, 0, 4), dtype=np.uint8), positive_prompt="x")


def test_regenerate_features_fixture_deterministic():
    pos = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    cfg = BackendConfig(endpoint="fixture:any")
    img = np.zeros((4, 4, 4), dtype=np.uint8)
    a = gateway.regenerate_features(img, pos, 64, cfg)
    b = gateway.regenerate_features(img, pos, 64, cfg)
    assert np.array_equal(a.positions, pos)
    assert formats.write_slat(a) == formats.write_slat(b)


# -----------------------------------------------------------------------------
# remote transport against the stub
# -----------------------------------------------------------------------------

def test_remote_generate_asset_roundtrip():
    bundle = fixtures.make_bundle("fish")
    stub = _StubBackend(json.loads(formats.bundle_to_json(bundle)))
    try:
        cfg = BackendConfig(endpoint=stub.endpoint, timeout=5)
        got = gateway.generate_asset("a fish", cfg)
        assert got.skeleton.num_joints == bundle.skeleton.num_joints
        assert stub.requests[0]["prompt"] == "a fish"
        assert stub.requests[0]["guidance_scale"] == 5.0
        assert stub.requests[0]["sampling_steps"] == 25
    finally:
        stub.close()


def test_remote_malformed_bundle():
    stub = _StubBackend({"mesh": "nope"})
    try:
        with pytest.raises(MalformedResponse):
            gateway.generate_asset("x", BackendConfig(endpoint=stub.endpoint, timeout=5))
    finally:
        stub.close()


def test_remote_edit_image_carries_both_prompts():
    img = np.full((4, 4, 4), 7, dtype=np.uint8)
    stub = _StubBackend({"image": base64.b64encode(encode_png(img)).decode()})
    try:
        out = gateway.edit_image(
            EditRequest(image=img, positive_prompt="keep structure",
                        negative_prompt="no blur", extra_params={"strength": 0.4}),
            BackendConfig(endpoint=stub.endpoint, timeout=5))
        assert np.array_equal(out, img)
        sent = stub.requests[0]
        assert sent["positive_prompt"] == "keep structure"
        assert sent["negative_prompt"] == "no blur"
        assert sent["extra_params"] == {"strength": 0.4}
    finally:
        stub.close()


def test_remote_plan_missing_ops_is_malformed():
    stub = _StubBackend({"parts": []})
    try:
        with pytest.raises(MalformedResponse):
            gateway.plan_ops({"request": "x"},
                             BackendConfig(endpoint=stub.endpoint, timeout=5))
    finally:
        stub.close()


def test_remote_plan_unknown_part_rejected():
    doc = {"parts": [{"asset": "zz", "region": "head", "instance": 1,
                      "copies": 1, "symmetric": False}],
           "ops": [], "attach": []}
    stub = _StubBackend(doc)
    try:
        state = prepare_asset("a0", fixtures.make_bundle("quadruped"))
        with pytest.raises(PlanRejected) as err:
            gateway.plan_ops({"request": "x"},
                             BackendConfig(endpoint=stub.endpoint, timeout=5),
                             parts=state.parts)
        assert err.value.violations
    finally:
        stub.close()


def test_remote_regenerate_structure_violation():
    from beastforge.voxels import SparseLatent

    wrong = formats.write_slat(SparseLatent(
        resolution=64, channels=8,
        positions=np.array([[0, 0, 0], [1, 1, 1]]),
        features=np.zeros((2, 8))))
    stub = _StubBackend({"slat": base64.b64encode(wrong).decode()})
    try:
        with pytest.raises(StructureViolation):
            gateway.regenerate_features(
                np.zeros((4, 4, 4), dtype=np.uint8),
                np.array([[0, 0, 0]]), 64,
                BackendConfig(endpoint=stub.endpoint, timeout=5))
    finally:
        stub.close()


def test_api_key_sent_but_never_logged(monkeypatch, caplog):
    secret = "sk-super-secret-value"
    monkeypatch.setenv("TEST_GW_KEY", secret)
    bundle = fixtures.make_bundle("fish")
    stub = _StubBackend(json.loads(formats.bundle_to_json(bundle)))
    try:
        with caplog.at_level(logging.DEBUG):
            gateway.generate_asset(
                "x", BackendConfig(endpoint=stub.endpoint, api_key_env="TEST_GW_KEY",
                                   timeout=5))
        assert stub.headers[0].get("Authorization") == f"Bearer {secret}"
        assert secret not in caplog.text
        for sent in stub.requests:
            assert secret not in json.dumps(sent)
    finally:
        stub.close()


def test_plan_ops_fixture_replay_validates():
    state = prepare_asset("a0", fixtures.make_bundle("quadruped"))
    plan = gateway.plan_ops({"request": ""},
                            BackendConfig(endpoint="fixture:quadruped"),
                            parts=state.parts)
    assert [d.ref.label for d in plan.parts] == ["body"]


def test_fixture_plan_backend_object():
    backend = gateway.FixturePlanBackend(fixtures.recorded_plan("quadruped"))
    assert backend.plan({"request": "anything"})["parts"][0]["region"] == "body"


def test_remote_rig_vertex_count_mismatch():
    bundle = fixtures.make_bundle("fish")
    doc = {
        "skeleton": json.loads(formats.skeleton_to_json(bundle.skeleton)),
        "skinning": base64.b64encode(formats.write_musw(bundle.skinning)).decode(),
    }
    stub = _StubBackend(doc)
    try:
        wrong_mesh = np.zeros((bundle.vertices.shape[0] + 5, 3))
        with pytest.raises(MalformedResponse):
            gateway.rig_asset(wrong_mesh, bundle.faces,
                              BackendConfig(endpoint=stub.endpoint, timeout=5))
    finally:
        stub.close()


def test_llm_backend_from_env(monkeypatch):
    monkeypatch.delenv(gateway.ENV_LLM_ENDPOINT, raising=False)
    assert gateway.LlmPlanBackend.from_env() is None
    monkeypatch.setenv(gateway.ENV_LLM_ENDPOINT, "http://example.invalid/")
    backend = gateway.LlmPlanBackend.from_env()
    assert backend is not None
    assert backend.cfg.api_key_env == gateway.ENV_LLM_API_KEY
