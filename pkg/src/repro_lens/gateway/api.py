"""HTTP surface: job submission, status, reports, provenance, Binder redirects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse, PlainTextResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .binder import UnsupportedHost, binder_link
from .jobs import InvalidUrl, JobNotFinished, JobNotFound, JobService


class JobSubmission(BaseModel):
    url: str
    ref: Optional[str] = None


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(service: JobService, frontend_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="repro-lens", version="0.1.0")

    @app.post("/api/jobs", status_code=202)
    def submit_job(body: JobSubmission):
        try:
            job_id = service.submit(body.url, body.ref)
        except InvalidUrl as exc:
            return _error(400, "invalid_url", str(exc))
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return service.status(job_id).to_json()
        except JobNotFound:
            return _error(404, "job_not_found", f"no job {job_id}")

    @app.get("/api/jobs/{job_id}/report")
    def job_report(job_id: str):
        try:
            payload = service.report_bytes(job_id)
        except JobNotFound:
            return _error(404, "job_not_found", f"no job {job_id}")
        except JobNotFinished:
            return _error(409, "job_not_finished", f"job {job_id} has not completed")
        return Response(content=payload, media_type="application/json")

    @app.get("/api/jobs/{job_id}/notebooks/{index}/prov.ttl")
    def notebook_provenance(job_id: str, index: int):
        try:
            service.status(job_id)
        except JobNotFound:
            return _error(404, "job_not_found", f"no job {job_id}")
        path = service.store.turtle_path(job_id, index)
        if not path.exists():
            return _error(404, "provenance_not_found", f"no provenance for notebook {index}")
        return PlainTextResponse(path.read_text(encoding="utf-8"), media_type="text/turtle")

    @app.get("/api/jobs/{job_id}/notebooks/{index}/binder")
    def notebook_binder(job_id: str, index: int):
        try:
            record = service.status(job_id)
            payload = service.report_bytes(job_id)
        except JobNotFound:
            return _error(404, "job_not_found", f"no job {job_id}")
        except JobNotFinished:
            return _error(409, "job_not_finished", f"job {job_id} has not completed")
        document = json.loads(payload.decode("utf-8"))
        notebooks = document.get("notebooks", [])
        if not (0 <= index < len(notebooks)):
            return _error(404, "notebook_not_found", f"no notebook {index}")
        try:
            target = binder_link(record.url, document["job"]["ref"], notebooks[index]["path"])
        except UnsupportedHost as exc:
            return _error(400, "unsupported_host", str(exc))
        return RedirectResponse(url=target, status_code=302)

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="dashboard")

    return app
