"""HTTP API over the annotation store, plus static serving of the UI bundle.

All payloads use the documented record schemas. Auth is a single shared
token checked against the ``X-Annotation-Token`` header when configured.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import AnnotationStore
from .errors import ContractError, VersionConflict
from .records import dumps_record


class ClaimBody(BaseModel):
    assignee: str


class LabelsBody(BaseModel):
    labels: list[str]
    version: int | None = None


class SkipBody(BaseModel):
    version: int | None = None


class ResolveBody(BaseModel):
    accepted: bool


def create_app(
    store: AnnotationStore, ui_dir: Path | str | None = None, token: str | None = None
) -> FastAPI:
    app = FastAPI(title="annotation service")

    def check_token(request: Request) -> None:
        if token is not None and request.headers.get("X-Annotation-Token") != token:
            raise HTTPException(status_code=401, detail="missing or wrong token")

    guarded = [Depends(check_token)]

    @app.exception_handler(ContractError)
    async def contract_error(request: Request, exc: ContractError):  # noqa: ARG001
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(VersionConflict)
    async def version_conflict(request: Request, exc: VersionConflict):  # noqa: ARG001
        raise HTTPException(status_code=409, detail=str(exc))

    @app.exception_handler(KeyError)
    async def not_found(request: Request, exc: KeyError):  # noqa: ARG001
        raise HTTPException(status_code=404, detail=f"unknown id {exc.args[0]!r}")

    @app.get("/api/splits", dependencies=guarded)
    def list_splits() -> list[dict[str, Any]]:
        return [split.summary(store.tasks) for split in store.splits.values()]

    @app.get("/api/splits/{split_id}", dependencies=guarded)
    def split_detail(split_id: int) -> dict[str, Any]:
        split = store.splits.get(split_id)
        if split is None:
            raise HTTPException(status_code=404, detail=f"unknown split {split_id}")
        summary = split.summary(store.tasks)
        summary["tasks"] = [
            {
                "task_id": task_id,
                "status": store.tasks[task_id].status,
                "assignee": store.tasks[task_id].assignee,
            }
            for task_id in split.task_ids
        ]
        return summary

    @app.post("/api/splits/{split_id}/claim", dependencies=guarded)
    def claim(split_id: int, body: ClaimBody) -> dict[str, Any]:
        return store.claim(split_id, body.assignee).view()

    @app.get("/api/tasks/{task_id}", dependencies=guarded)
    def task_view(task_id: str) -> dict[str, Any]:
        return store.task(task_id).view()

    @app.post("/api/tasks/{task_id}/labels", dependencies=guarded)
    def submit_labels(task_id: str, body: LabelsBody) -> dict[str, Any]:
        return store.submit_labels(task_id, body.labels, body.version).view()

    @app.post("/api/tasks/{task_id}/skip", dependencies=guarded)
    def skip(task_id: str, body: SkipBody) -> dict[str, Any]:
        return store.skip(task_id, body.version).view()

    @app.post("/api/splits/{split_id}/review/sample", dependencies=guarded)
    def sample_review(split_id: int) -> dict[str, Any]:
        return {"task_ids": store.sample_for_review(split_id)}

    @app.post("/api/splits/{split_id}/review/resolve", dependencies=guarded)
    def resolve_review(split_id: int, body: ResolveBody) -> dict[str, Any]:
        split = store.resolve_review(split_id, body.accepted)
        return split.summary(store.tasks)

    @app.get("/api/splits/{split_id}/export", dependencies=guarded)
    def export_split(split_id: int) -> PlainTextResponse:
        items = store.export_split(split_id)
        body = "".join(dumps_record(item) + "\n" for item in items)
        return PlainTextResponse(body, media_type="application/x-ndjson")

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    store: AnnotationStore,
    host: str = "127.0.0.1",
    port: int = 8000,
    ui_dir: Path | str | None = None,
    token: str | None = None,
) -> None:
    import uvicorn

    uvicorn.run(create_app(store, ui_dir=ui_dir, token=token), host=host, port=port)
