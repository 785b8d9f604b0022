import json
import threading
import urllib.request

import pytest

from beastforge import service


@pytest.fixture(scope="module")
def server():
    srv = service.serve("127.0.0.1", 0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv
    srv.shutdown()


def call(srv, method, path, body=None):
    host, port = srv.server_address
    url = f"http://{host}:{port}{path}"
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        raw = err.read()
        return err.code, json.loads(raw) if raw else {}


def fetch(srv, path):
    host, port = srv.server_address
    with urllib.request.urlopen(f"http://{host}:{port}{path}", timeout=30) as resp:
        return resp.status, resp.read()


import urllib.error  # noqa: E402


def test_full_session_flow(server):
    status, created = call(server, "POST", "/sessions")
    assert status == 200
    sid = created["id"]

    status, r = call(server, "POST", f"/sessions/{sid}/assets",
                     {"fixture": "quadruped"})
    assert status == 200 and r["asset"] == "a0"
    status, r = call(server, "POST", f"/sessions/{sid}/assets",
                     {"fixture": "winged"})
    assert status == 200 and r["asset"] == "a1"

    status, r = call(server, "POST", f"/sessions/{sid}/classify")
    assert status == 200
    quad = next(a for a in r["assets"] if a["asset"] == "a0")
    assert len(quad["partition"]["regions"]) == 7

    status, r = call(server, "POST", f"/sessions/{sid}/plan",
                     {"request": "wings on the quadruped"})
    assert status == 200
    rev_after_plan = r["revision"]
    assert any(p["region"] == "wing" for p in r["plan"]["parts"])

    status, r = call(server, "POST", f"/sessions/{sid}/ops",
                     {"type": "rotate", "target": "a0/head/1",
                      "axis": [0, 1, 0], "pivot": [0.25, 0.05, 0.0],
                      "angle_deg": 90})
    assert status == 200
    assert r["revision"] > rev_after_plan

    status, r = call(server, "GET", f"/sessions/{sid}/preview")
    assert status == 200
    assert r["resolution"] == 16
    assert sum(r["occupancy_rle"]) == 16 ** 3

    status, r = call(server, "POST", f"/sessions/{sid}/compose")
    assert status == 200
    status, blob = fetch(server, r["href"])
    assert status == 200 and blob[:4] == b"SLAT"


def test_invalid_op_returns_400_with_violations(server):
    _, created = call(server, "POST", "/sessions")
    sid = created["id"]
    call(server, "POST", f"/sessions/{sid}/assets", {"fixture": "quadruped"})
    call(server, "POST", f"/sessions/{sid}/plan", {"request": "quadruped"})
    status, r = call(server, "POST", f"/sessions/{sid}/ops",
                     {"type": "scale", "target": "a0/head/1",
                      "factor": 0.0, "pivot": [0, 0, 0]})
    assert status == 400
    assert any("non-positive scale" in v for v in r["violations"])


def test_unknown_session_404(server):
    status, r = call(server, "POST", "/sessions/deadbeef/classify")
    assert status == 404


def test_style_without_backend_502(server, monkeypatch):
    monkeypatch.delenv("MUSES_IMGEDIT_ENDPOINT", raising=False)
    monkeypatch.delenv("MUSES_GEN3D_ENDPOINT", raising=False)
    _, created = call(server, "POST", "/sessions")
    sid = created["id"]
    call(server, "POST", f"/sessions/{sid}/assets", {"fixture": "fish"})
    call(server, "POST", f"/sessions/{sid}/plan", {"request": ""})
    status, r = call(server, "POST", f"/sessions/{sid}/style",
                     {"style_prompt": "mythological"})
    assert status == 502


def test_sessions_isolated_and_revisions_monotone(server):
    _, s1 = call(server, "POST", "/sessions")
    _, s2 = call(server, "POST", "/sessions")
    sid1, sid2 = s1["id"], s2["id"]
    _, r1 = call(server, "POST", f"/sessions/{sid1}/assets", {"fixture": "fish"})
    _, r2 = call(server, "POST", f"/sessions/{sid2}/assets", {"fixture": "fish"})
    assert r1["asset"] == r2["asset"] == "a0"
    _, p1 = call(server, "POST", f"/sessions/{sid1}/plan", {"request": ""})
    revs = [r1["revision"], p1["revision"]]
    assert revs == sorted(revs) and len(set(revs)) == len(revs)
    # session 2 unaffected by session 1's plan
    status, r = call(server, "GET", f"/sessions/{sid2}/preview")
    assert status == 400


def test_concurrent_mutations_serialize(server):
    _, created = call(server, "POST", "/sessions")
    sid = created["id"]
    call(server, "POST", f"/sessions/{sid}/assets", {"fixture": "quadruped"})
    call(server, "POST", f"/sessions/{sid}/plan", {"request": "quadruped"})
    revisions = []
    errors = []

    def spin(angle):
        status, r = call(server, "POST", f"/sessions/{sid}/ops",
                         {"type": "rotate", "target": "a0/head/1",
                          "axis": [0, 1, 0], "pivot": [0.25, 0.05, 0.0],
                          "angle_deg": angle})
        if status == 200:
            revisions.append(r["revision"])
        else:
            errors.append(r)

    threads = [threading.Thread(target=spin, args=(a,)) for a in (10, 20, 30, 40)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(set(revisions)) == len(revisions)


def test_explicit_plan_roundtrip_restores_bytes(server):
    """Re-posting an identical plan reproduces the skeleton exactly (the undo
    path the UI uses)."""
    _, created = call(server, "POST", "/sessions")
    sid = created["id"]
    call(server, "POST", f"/sessions/{sid}/assets", {"fixture": "quadruped"})
    _, before = call(server, "POST", f"/sessions/{sid}/plan",
                     {"request": "quadruped"})
    _, pre = call(server, "GET", f"/sessions/{sid}/preview")
    call(server, "POST", f"/sessions/{sid}/ops",
         {"type": "translate", "target": "a0/tail/1",
          "dir": [0, 1, 0], "dist": 0.05})
    _, restored = call(server, "POST", f"/sessions/{sid}/plan",
                       {"plan": before["plan"]})
    _, post = call(server, "GET", f"/sessions/{sid}/preview")
    assert json.dumps(pre["skeleton"]) == json.dumps(post["skeleton"])
