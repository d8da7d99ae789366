import pytest
from fastapi.testclient import TestClient

from heightqa.server import create_app
from heightqa.verify import ReviewStore, sample_for_review


@pytest.fixture
def client(plus_records, bundles_by_id, tmp_path):
    items = sample_for_review(plus_records, rate=0.05, seed=7)
    store = ReviewStore(items, roster=["alice", "bob"],
                        log_path=tmp_path / "log.jsonl")
    by_id = {r.id: r for r in plus_records}
    app = create_app(store, bundles_by_id, by_id)
    return TestClient(app), store


def test_next_item_flow(client):
    http, store = client
    resp = http.get("/items/next", params={"reviewer": "alice"})
    assert resp.status_code == 200
    body = resp.json()
    assert not body["done"]
    assert body["item"]["record_id"] == store.items[0].record_id
    assert body["item"]["overlay_image_ref"].startswith("/overlays/")


def test_unknown_reviewer_403(client):
    http, _ = client
    assert http.get("/items/next", params={"reviewer": "mallory"}).status_code == 403


def test_verdict_roundtrip_and_idempotence(client):
    http, _ = client
    item = http.get("/items/next", params={"reviewer": "alice"}).json()["item"]
    body = {"record_id": item["record_id"], "reviewer_id": "alice",
            "verdict": "correct", "note": ""}
    first = http.post("/verdicts", json=body)
    assert first.status_code == 200
    assert first.json()["outcome"] == "stored"
    again = http.post("/verdicts", json=body)
    assert again.status_code == 200
    assert again.json()["outcome"] == "duplicate"


def test_conflicting_verdict_409(client):
    http, _ = client
    item = http.get("/items/next", params={"reviewer": "alice"}).json()["item"]
    base = {"record_id": item["record_id"], "reviewer_id": "alice", "note": ""}
    assert http.post("/verdicts", json={**base, "verdict": "correct"}).status_code == 200
    resp = http.post("/verdicts", json={**base, "verdict": "incorrect"})
    assert resp.status_code == 409


def test_unknown_record_404_unknown_reviewer_403(client):
    http, _ = client
    resp = http.post("/verdicts", json={"record_id": "nope", "reviewer_id": "alice",
                                        "verdict": "correct", "note": ""})
    assert resp.status_code == 404
    resp = http.post("/verdicts", json={"record_id": "nope", "reviewer_id": "eve",
                                        "verdict": "correct", "note": ""})
    assert resp.status_code == 403


def test_invalid_verdict_value_422(client):
    http, store = client
    resp = http.post("/verdicts", json={
        "record_id": store.items[0].record_id, "reviewer_id": "alice",
        "verdict": "maybe", "note": ""})
    assert resp.status_code == 422


def test_completed_item_not_reoffered(client):
    http, store = client
    rid = store.items[0].record_id
    for reviewer in ("alice", "bob"):
        http.post("/verdicts", json={"record_id": rid, "reviewer_id": reviewer,
                                     "verdict": "correct", "note": ""})
    for reviewer in ("alice", "bob"):
        nxt = http.get("/items/next", params={"reviewer": reviewer}).json()
        assert nxt["item"] is None or nxt["item"]["record_id"] != rid


def test_progress_counts(client):
    http, store = client
    total = len(store.items)
    assert http.get("/progress").json() == {
        "pending": total, "partially_reviewed": 0, "complete": 0,
        "total": total, "verdicts": 0}
    rid = store.items[0].record_id
    http.post("/verdicts", json={"record_id": rid, "reviewer_id": "alice",
                                 "verdict": "correct", "note": ""})
    assert http.get("/progress").json()["partially_reviewed"] == 1


def test_full_session_two_reviewers_complete_everything(client):
    http, store = client
    for reviewer in ("alice", "bob"):
        while True:
            body = http.get("/items/next", params={"reviewer": reviewer}).json()
            if body["done"]:
                break
            http.post("/verdicts", json={
                "record_id": body["item"]["record_id"],
                "reviewer_id": reviewer, "verdict": "correct", "note": ""})
    progress = http.get("/progress").json()
    assert progress["complete"] == progress["total"]
    agreement = http.get("/agreement").json()
    assert agreement["precision_estimate"] == 1.0
    assert agreement["flagged_records"] == []


def test_overlay_endpoint_serves_png(client):
    http, store = client
    rid = store.items[0].record_id
    resp = http.get(f"/overlays/{rid}")
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content.startswith(b"\x89PNG")
    assert http.get("/overlays/absent").status_code == 404
