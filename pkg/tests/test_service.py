"""API contract: status codes, machine-readable error codes, payload flow,
persistence across service restarts."""

import pytest
from fastapi.testclient import TestClient

from leamatch.artifacts import compute_case, save_case
from leamatch.service import AppState, create_app
from leamatch.store import ScanStore


@pytest.fixture(scope="module")
def env(tmp_path_factory, small_dataset, small_forest, cfg):
    root = tmp_path_factory.mktemp("service")
    store = ScanStore(root / "store")
    bullets = [fb for fb in small_dataset.bullets
               if fb.truth.barrel_id in small_dataset.holdout_barrels][:4]
    for fb in bullets:
        store.put_bullet(fb.bullet)
    state = AppState(store, forest=small_forest, cfg=cfg, data_dir=root / "store")
    client = TestClient(create_app(state))
    resp = client.post("/api/v1/cases/case-S/compute", json={})
    assert resp.status_code == 200
    return {"client": client, "state": state, "root": root,
            "ids": sorted(fb.bullet.bullet_id for fb in bullets)}


def _fresh_session(env, mode="guided"):
    resp = env["client"].post("/api/v1/sessions",
                              json={"case_id": "case-S", "mode": mode})
    assert resp.status_code == 201, resp.text
    return resp.json()


def test_compute_and_bullets_endpoint(env):
    resp = env["client"].get("/api/v1/cases/case-S/bullets")
    assert resp.status_code == 200
    body = resp.json()
    assert body["bullet_ids"] == env["ids"]
    assert body["n_lands"] == 6


def test_unknown_case_404(env):
    resp = env["client"].get("/api/v1/cases/missing/bullets")
    assert resp.status_code == 404
    assert resp.json()["error"]["code"] == "UnknownCase"
    resp = env["client"].post("/api/v1/sessions",
                              json={"case_id": "missing", "mode": "guided"})
    assert resp.status_code == 404


def test_session_create_and_level_one(env):
    view = _fresh_session(env)
    assert view["active_levels"] == [1]
    sid = view["session_id"]
    resp = env["client"].get(f"/api/v1/sessions/{sid}/levels/1")
    assert resp.status_code == 200
    payload = resp.json()
    assert payload["level"] == 1
    n = len(env["ids"])
    assert len(payload["scores"]) == n
    for i in range(n):
        assert payload["scores"][i][i] == 1.0
        assert payload["by_convention"][i][i] is True


def test_out_of_order_409(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].post(f"/api/v1/sessions/{sid}/levels", json={"level": 3})
    assert resp.status_code == 409
    assert resp.json()["error"]["code"] in ("OutOfOrder", "MissingSelection")


def test_level_out_of_range_422(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].post(f"/api/v1/sessions/{sid}/levels", json={"level": 9})
    assert resp.status_code == 422


def test_guided_flow_and_payloads(env):
    client = env["client"]
    sid = _fresh_session(env)["session_id"]
    a, b = env["ids"][0], env["ids"][1]
    resp = client.post(f"/api/v1/sessions/{sid}/selection",
                       json={"bullet_pair": [a, b]})
    assert resp.status_code == 200
    resp = client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 2})
    assert resp.status_code == 200
    assert resp.json()["active_levels"] == [1, 2]

    resp = client.get(f"/api/v1/sessions/{sid}/levels/2")
    assert resp.status_code == 200
    scores_plain = resp.json()["scores"]

    # frame on: scores identical, frame cells present
    resp = client.post(f"/api/v1/sessions/{sid}/match-frame",
                       json={"enabled": True, "hypothesis_phase": 0})
    assert resp.status_code == 200
    framed = client.get(f"/api/v1/sessions/{sid}/levels/2").json()
    assert framed["scores"] == scores_plain
    assert framed["match_frame"]["cells"] == [[i, i] for i in range(6)]

    resp = client.post(f"/api/v1/sessions/{sid}/selection", json={"land_pair": [0, 0]})
    assert resp.status_code == 200
    for level in (3, 4, 5, 6):
        resp = client.post(f"/api/v1/sessions/{sid}/levels", json={"level": level})
        assert resp.status_code == 200
        resp = client.get(f"/api/v1/sessions/{sid}/levels/{level}")
        assert resp.status_code == 200
        assert resp.json()["level"] == level

    resp = client.post(f"/api/v1/sessions/{sid}/conclusion",
                       json={"category": "identification", "rationale": "aligned"})
    assert resp.status_code == 200
    assert resp.json()["conclusion"]["levels_visited_at_decision"] == [1, 2, 3, 4, 5, 6]

    resp = client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 6})
    assert resp.status_code == 409
    assert resp.json()["error"]["code"] == "AlreadyConcluded"


def test_payload_for_inactive_level_409(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].get(f"/api/v1/sessions/{sid}/levels/3")
    assert resp.status_code == 409
    assert resp.json()["error"]["code"] == "LevelNotActive"


def test_bad_phase_422(env):
    client = env["client"]
    sid = _fresh_session(env)["session_id"]
    a, b = env["ids"][0], env["ids"][1]
    client.post(f"/api/v1/sessions/{sid}/selection", json={"bullet_pair": [a, b]})
    client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 2})
    resp = client.post(f"/api/v1/sessions/{sid}/match-frame",
                       json={"enabled": True, "hypothesis_phase": 7})
    assert resp.status_code == 422
    assert resp.json()["error"]["code"] == "BadPhase"


def test_premature_conclusion_409(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].post(f"/api/v1/sessions/{sid}/conclusion",
                              json={"category": "elimination"})
    assert resp.status_code == 409
    assert resp.json()["error"]["code"] == "PrematureConclusion"


def test_unknown_session_404(env):
    resp = env["client"].get("/api/v1/sessions/nope/levels/1")
    assert resp.status_code == 404
    assert resp.json()["error"]["code"] == "UnknownId"


def test_unknown_bullet_selection_404(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].post(f"/api/v1/sessions/{sid}/selection",
                              json={"bullet_pair": ["ghost", env["ids"][0]]})
    assert resp.status_code == 404


def test_selection_requires_exactly_one_kind(env):
    sid = _fresh_session(env)["session_id"]
    resp = env["client"].post(f"/api/v1/sessions/{sid}/selection", json={})
    assert resp.status_code == 422


def test_audit_endpoint_and_restart_replay(env, small_forest, cfg):
    client = env["client"]
    view = _fresh_session(env, mode="diagnostics")
    sid = view["session_id"]
    a, b = env["ids"][2], env["ids"][1]
    client.post(f"/api/v1/sessions/{sid}/selection", json={"bullet_pair": [a, b]})
    client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 2})
    resp = client.get(f"/api/v1/sessions/{sid}/audit")
    assert resp.status_code == 200
    events = resp.json()["events"]
    assert [e["action"] for e in events] == ["created", "bullet_pair_selected",
                                             "level_added"]

    # a fresh service over the same data dir replays the session from its log
    state2 = AppState(env["state"].store, forest=small_forest, cfg=cfg,
                      data_dir=env["root"] / "store")
    client2 = TestClient(create_app(state2))
    resp = client2.get(f"/api/v1/sessions/{sid}")
    assert resp.status_code == 200
    assert resp.json()["active_levels"] == [1, 2]
    assert resp.json()["selection"]["bullet_pair"] == [a, b]


def test_diagnostics_skip_via_api(env):
    client = env["client"]
    sid = _fresh_session(env, mode="diagnostics")["session_id"]
    a, b = env["ids"][0], env["ids"][2]
    client.post(f"/api/v1/sessions/{sid}/selection", json={"bullet_pair": [a, b]})
    client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 2})
    client.post(f"/api/v1/sessions/{sid}/selection", json={"land_pair": [1, 4]})
    resp = client.post(f"/api/v1/sessions/{sid}/levels", json={"level": 5})
    assert resp.status_code == 200
    assert resp.json()["active_levels"] == [1, 2, 5]
