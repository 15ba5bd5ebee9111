from fastapi.testclient import TestClient

import api
from api import ExperimentResponse, app

client = TestClient(app)


def spec_body(tmp_path):
    return {
        "task": "fsre2",
        "variants": ["ALOQ"],
        "seeds": [0, 1],
        "budget": 8,
        "hyper_samples": 2,
        "hyper_burn_in": 3,
        "hyper_thinning": 1,
        "direct_budget": 30,
        "output_dir": str(tmp_path),
    }


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_experiment_lifecycle(tmp_path):
    response = client.post("/api/experiments", json=spec_body(tmp_path))
    assert response.status_code == 200
    experiment_id = response.json()["experiment_id"]

    # background tasks finish before the test client returns
    status = client.get(f"/api/experiments/{experiment_id}").json()
    assert status["status"] == "completed", status.get("error")
    assert len(status["run_files"]) == 2

    summary = client.get(f"/api/experiments/{experiment_id}/summary")
    assert summary.status_code == 200
    final = summary.json()["final"]
    assert final[0]["variant"] == "ALOQ"
    assert final[0]["n_seeds"] == 2
    assert (tmp_path / f"{experiment_id}_summary.json").exists()


def test_invalid_spec_rejected(tmp_path):
    body = spec_body(tmp_path)
    body["seeds"] = []
    assert client.post("/api/experiments", json=body).status_code == 422


def test_unknown_experiment():
    assert client.get("/api/experiments/nope").status_code == 404
    assert client.get("/api/experiments/nope/summary").status_code == 404


def test_summary_before_completion(monkeypatch):
    record = ExperimentResponse(experiment_id="pending", status="processing", task="fsre2",
                                created_at="2024-01-01T00:00:00")
    monkeypatch.setitem(api.experiment_storage, "pending", record)
    assert client.get("/api/experiments/pending/summary").status_code == 400


def test_failed_experiment_reports_error(tmp_path):
    body = spec_body(tmp_path)
    body["task"] = "cartpole"
    experiment_id = client.post("/api/experiments", json=body).json()["experiment_id"]
    status = client.get(f"/api/experiments/{experiment_id}").json()
    assert status["status"] == "failed"
    assert "cartpole" in status["error"]
