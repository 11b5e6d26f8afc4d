from types import SimpleNamespace

import pytest
from fastapi.testclient import TestClient

from app.api.routes import studies as study_routes
from app.celery_app import celery_app
from app.tasks.study import run_study_task, solve_level_task
from main import create_app


@pytest.fixture
def client():
    return TestClient(create_app())


@pytest.fixture
def sent(monkeypatch):
    calls = []

    def send_task(name, args=None, **kwargs):
        calls.append((name, args))
        return SimpleNamespace(id="task-1")

    monkeypatch.setattr(celery_app, "send_task", send_task)
    return calls


def _fake_result(state, result=None):
    class FakeResult:
        def __init__(self, task_id, app=None):
            self.id = task_id
            self.state = state
            self.result = result

        def successful(self):
            return state == "SUCCESS"

        def failed(self):
            return state == "FAILURE"

    return FakeResult


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"
    assert body["executor"] in ("local", "celery")


def test_queue_study(client, sent):
    response = client.post("/studies", json={"kind": "critical", "levels": [16, 32, 64]})
    assert response.status_code == 202
    assert response.json()["task_id"] == "task-1"
    name, args = sent[0]
    assert name == "studies.run"
    assert args[0]["kind"] == "critical"
    assert args[0]["levels"] == [16, 32, 64]


def test_invalid_study_is_rejected(client, sent):
    response = client.post("/studies", json={"domain": "ball", "N": 4, "levels": [1]})
    assert response.status_code == 422
    assert sent == []


def test_study_outside_the_numerical_range_is_rejected(client, sent):
    response = client.post("/studies", json={"kind": "subcritical", "N": 50, "levels": [16]})
    assert response.status_code == 422
    assert "Bessel order" in response.json()["detail"]
    assert sent == []


def test_study_status_returns_the_report(client, monkeypatch):
    payload = run_study_task({"kind": "hardy", "levels": [16, 32]})
    monkeypatch.setattr(study_routes, "AsyncResult", _fake_result("SUCCESS", payload))
    body = client.get("/studies/task-1").json()
    assert body["state"] == "SUCCESS"
    assert [row["level"] for row in body["report"]["rows"]] == [16, 32]


def test_study_status_reports_failures(client, monkeypatch):
    monkeypatch.setattr(study_routes, "AsyncResult", _fake_result("FAILURE", RuntimeError("worker lost")))
    body = client.get("/studies/task-2").json()
    assert body == {"task_id": "task-2", "state": "FAILURE", "error": "worker lost"}


def test_pending_study(client, monkeypatch):
    monkeypatch.setattr(study_routes, "AsyncResult", _fake_result("PENDING"))
    assert client.get("/studies/task-3").json() == {"task_id": "task-3", "state": "PENDING"}


def test_verification_report_status(client, monkeypatch):
    payload = {"checks": [{"name": "logth", "passed": True, "detail": "", "constants": {}}], "passed": True}
    monkeypatch.setattr(study_routes, "AsyncResult", _fake_result("SUCCESS", payload))
    body = client.get("/studies/task-4").json()
    assert body["report"]["passed"] is True


def test_queue_verification(client, sent):
    response = client.post("/verify", json={"selection": ["brute_force"]})
    assert response.status_code == 202
    assert sent == [("studies.verify", [["brute_force"], True])]


def test_unknown_checks_are_rejected(client, sent):
    response = client.post("/verify", json={"selection": ["brute_force", "nope"]})
    assert response.status_code == 422
    assert "nope" in response.json()["detail"]
    assert sent == []


def test_solve_level_task_accepts_a_payload():
    row = solve_level_task({"kind": "hardy", "levels": [16]}, 16)
    assert row["level"] == 16
    assert row["value"] >= 0.25 - 1e-9
