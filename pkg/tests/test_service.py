"""HTTP service tests over the in-process ASGI transport."""

import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from podnet.service import create_app

SCENARIO = {
    "seed": 21,
    "vendors": 1,
    "distributors": 2,
    "devices_per_vendor": 3,
    "deposit": 1200,
}


@pytest.fixture
def client():
    return TestClient(create_app())


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_create_run_returns_metrics_and_verification(client):
    resp = client.post("/runs", json={"scenario": SCENARIO, "label": "smoke"})
    assert resp.status_code == 200
    data = resp.json()
    assert data["run_id"] == "run-0000"
    assert data["label"] == "smoke"
    assert data["metrics"]["devices_updated"] == 3
    assert data["verification"]["ok"] is True
    assert set(data["digests"]) == {"transcript", "ledger", "metrics"}


def test_seed_override_beats_scenario_seed(client):
    resp = client.post("/runs", json={"scenario": SCENARIO, "seed": 99})
    assert resp.status_code == 200
    assert resp.json()["metrics"]["seed"] == 99


def test_two_runs_same_scenario_are_bit_identical(client):
    first = client.post("/runs", json={"scenario": SCENARIO}).json()
    second = client.post("/runs", json={"scenario": SCENARIO}).json()
    assert first["run_id"] != second["run_id"]
    assert first["digests"] == second["digests"]


def test_list_and_get_runs(client):
    created = client.post("/runs", json={"scenario": SCENARIO, "label": "a"}).json()
    listing = client.get("/runs").json()
    assert [row["run_id"] for row in listing] == [created["run_id"]]
    assert listing[0]["verification_ok"] is True
    fetched = client.get(f"/runs/{created['run_id']}").json()
    assert fetched == created


def test_unknown_run_is_404(client):
    for endpoint in ("", "/log", "/ledger", "/audit", "/delivery"):
        resp = client.get(f"/runs/run-9999{endpoint}")
        assert resp.status_code == 404


@pytest.mark.parametrize(
    "bad",
    [
        {"scenario": {**SCENARIO, "distributors": -1}},
        {"scenario": {**SCENARIO, "no_such_knob": 1}},
        {"scenario": SCENARIO, "seed": -3},
        {"scenario": SCENARIO, "seed": 2**64},
        {},
    ],
)
def test_invalid_requests_are_422(client, bad):
    assert client.post("/runs", json=bad).status_code == 422


def test_artifact_endpoints(client):
    run_id = client.post("/runs", json={"scenario": SCENARIO}).json()["run_id"]
    log = client.get(f"/runs/{run_id}/log").json()
    assert log["format"] == "podnet-run-log/v1"
    assert log["scenario"]["seed"] == 21
    ledger = client.get(f"/runs/{run_id}/ledger").json()
    assert ledger["height"] > 0 and "accounts" in ledger
    audit = client.get(f"/runs/{run_id}/audit").json()
    secret_rows = [row for row in audit if row["kind"] == "session-secret"]
    assert secret_rows
    assert all("r" not in row and "t" not in row for row in secret_rows)
    delivery = client.get(f"/runs/{run_id}/delivery").json()
    assert len(delivery) == 3
    assert all(row["status"] == "installed" for row in delivery)


def test_replay_round_trip(client):
    run_id = client.post("/runs", json={"scenario": SCENARIO}).json()["run_id"]
    log = client.get(f"/runs/{run_id}/log").json()
    resp = client.post("/replay", json={"log": log})
    assert resp.status_code == 200
    data = resp.json()
    assert data["match"] is True
    assert data["digests"] == data["expected"]
    assert data["verification"]["ok"] is True


def test_replay_flags_divergence(client):
    run_id = client.post("/runs", json={"scenario": SCENARIO}).json()["run_id"]
    log = client.get(f"/runs/{run_id}/log").json()
    log["transcript_digest"] = "0" * 64
    data = client.post("/replay", json={"log": log}).json()
    assert data["match"] is False


def test_replay_rejects_malformed_log(client):
    resp = client.post("/replay", json={"log": {"nothing": "here"}})
    assert resp.status_code == 400
    assert "malformed run log" in resp.json()["detail"]


def test_attack_suite_endpoint(client):
    resp = client.post("/attack-suite")
    assert resp.status_code == 200
    data = resp.json()
    assert data["ok"] is True
    assert len(data["cases"]) == 9
    by_name = {case["name"]: case for case in data["cases"]}
    assert by_name["vendor-forge"]["caveat"] is True
    assert all(case["checks"] for case in data["cases"])
