from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from steplab.annotation import AnnotationStore
from steplab.annotation_api import create_app
from steplab.records import BenchCandidate, BenchItem, loads_record

from conftest import make_sample, make_solution


def _candidate(i: int, steps: int = 3) -> BenchCandidate:
    return BenchCandidate(
        sample=make_sample(i),
        solution=make_solution([f"step {j} of item {i}" for j in range(steps)]),
        solution_source="model-x",
    )


@pytest.fixture
def client(tmp_path):
    store = AnnotationStore(tmp_path / "events.jsonl", seed=1)
    store.make_splits([_candidate(i) for i in range(3)], 1)
    return TestClient(create_app(store))


def test_list_and_detail(client):
    splits = client.get("/api/splits").json()
    assert len(splits) == 1
    assert splits[0]["size"] == 3
    detail = client.get("/api/splits/0").json()
    assert len(detail["tasks"]) == 3
    assert client.get("/api/splits/9").status_code == 404


def test_claim_label_skip_review_export_flow(client):
    task = client.post("/api/splits/0/claim", json={"assignee": "ann"}).json()
    assert task["ground_truth"]
    assert len(task["steps"]) == 3
    done = client.post(
        f"/api/tasks/{task['task_id']}/labels",
        json={"labels": ["positive", "negative", "neutral"], "version": task["version"]},
    )
    assert done.status_code == 200
    stale = client.post(
        f"/api/tasks/{task['task_id']}/labels",
        json={"labels": ["positive"] * 3, "version": task["version"]},
    )
    assert stale.status_code == 409

    second = client.post("/api/splits/0/claim", json={"assignee": "ann"}).json()
    client.post(f"/api/tasks/{second['task_id']}/skip", json={"version": second["version"]})
    third = client.post("/api/splits/0/claim", json={"assignee": "ann"}).json()
    client.post(
        f"/api/tasks/{third['task_id']}/labels",
        json={"labels": ["positive", "positive", "negative"], "version": third["version"]},
    )

    sampled = client.post("/api/splits/0/review/sample").json()
    assert sampled["task_ids"]
    resolved = client.post("/api/splits/0/review/resolve", json={"accepted": True}).json()
    assert resolved["state"] == "accepted"

    export = client.get("/api/splits/0/export")
    assert export.status_code == 200
    lines = [line for line in export.text.splitlines() if line]
    assert len(lines) == 2
    for line in lines:
        item = loads_record(line, BenchItem)
        assert all(step.human_label for step in item.solution.steps)


def test_bad_label_payload_is_400(client):
    task = client.post("/api/splits/0/claim", json={"assignee": "a"}).json()
    response = client.post(
        f"/api/tasks/{task['task_id']}/labels", json={"labels": ["positive"]}
    )
    assert response.status_code == 400


def test_unknown_task_is_404(client):
    assert client.get("/api/tasks/nope").status_code == 404


def test_token_guard(tmp_path):
    store = AnnotationStore(tmp_path / "events.jsonl", seed=1)
    store.make_splits([_candidate(0)], 1)
    client = TestClient(create_app(store, token="sekrit"))
    assert client.get("/api/splits").status_code == 401
    ok = client.get("/api/splits", headers={"X-Annotation-Token": "sekrit"})
    assert ok.status_code == 200


def test_static_ui_serving(tmp_path):
    store = AnnotationStore(tmp_path / "events.jsonl", seed=1)
    store.make_splits([_candidate(0)], 1)
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>annotate</body></html>", encoding="utf-8")
    client = TestClient(create_app(store, ui_dir=ui))
    page = client.get("/")
    assert page.status_code == 200
    assert "annotate" in page.text
