"""HTTP service for runs, shortlists, decisions, and metrics.

The review UI and automation clients consume this API; it never exposes raw
resume text, only the artifacts a decision needs (cards, metrics, timing).
Mutating endpoints require a static bearer token taken from the environment.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backend import ChatClient
from .config import RunConfig, load_config
from .decide import (CandidateCard, DecisionCriteria, decide_auto,
                     record_manual_decision)
from .errors import ConfigError, IntegrityError, ValidationError
from .prompts import load_stage_template
from .runtime import (REPORT_FILE, RunReport, attach_decision, load_run,
                      load_run_decision, run_pipeline)

log = logging.getLogger(__name__)

API_TOKEN_ENV = "SCREEN_API_TOKEN"


class ApiError(Exception):
    def __init__(self, status: int, message: str, fields: dict | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.fields = fields or {}


class RunStartBody(BaseModel):
    config: dict | None = None
    config_path: str | None = None


class DecisionBody(BaseModel):
    selected_ids: list[str]
    rationale: str
    criteria: dict
    decider: str = "reviewer"


class AutoDecisionBody(BaseModel):
    criteria: dict | None = None


class _RunRegistry:
    """Tracks in-flight pipeline threads and idempotency keys."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._status: dict[str, str] = {}
        self._idempotency: dict[str, str] = {}
        self._decision_locks: dict[str, threading.Lock] = {}

    def start(self, run_id: str) -> None:
        with self._lock:
            self._status[run_id] = "running"

    def finish(self, run_id: str, status: str) -> None:
        with self._lock:
            self._status[run_id] = status

    def status(self, run_id: str) -> str | None:
        with self._lock:
            return self._status.get(run_id)

    def remember_key(self, key: str, run_id: str) -> None:
        with self._lock:
            self._idempotency[key] = run_id

    def run_for_key(self, key: str) -> str | None:
        with self._lock:
            return self._idempotency.get(key)

    def decision_lock(self, run_id: str) -> threading.Lock:
        with self._lock:
            return self._decision_locks.setdefault(run_id, threading.Lock())


def create_app(store_root: str | Path = "runs") -> FastAPI:
    app = FastAPI(title="screening service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    root = Path(store_root)
    registry = _RunRegistry()
    app.state.store_root = root
    app.state.registry = registry

    # -- error shaping -------------------------------------------------------

    @app.exception_handler(ApiError)
    async def on_api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.message, "fields": exc.fields})

    @app.exception_handler(ValidationError)
    async def on_validation_error(_req: Request, exc: ValidationError):
        return JSONResponse(status_code=422,
                            content={"error": str(exc), "fields": exc.fields})

    @app.exception_handler(ConfigError)
    async def on_config_error(_req: Request, exc: ConfigError):
        return JSONResponse(status_code=422,
                            content={"error": str(exc), "fields": {}})

    @app.exception_handler(IntegrityError)
    async def on_integrity_error(_req: Request, exc: IntegrityError):
        return JSONResponse(status_code=500,
                            content={"error": str(exc), "fields": {}})

    @app.exception_handler(RequestValidationError)
    async def on_request_validation(_req: Request, exc: RequestValidationError):
        fields = {}
        for err in exc.errors():
            loc = ".".join(str(p) for p in err.get("loc", []) if p != "body")
            fields[loc or "body"] = err.get("msg", "invalid")
        return JSONResponse(status_code=422,
                            content={"error": "invalid request body",
                                     "fields": fields})

    # -- helpers -------------------------------------------------------------

    def require_token(authorization: str | None) -> None:
        expected = os.environ.get(API_TOKEN_ENV)
        if not expected:
            raise ApiError(401, f"{API_TOKEN_ENV} is not configured on the server")
        if authorization != f"Bearer {expected}":
            raise ApiError(401, "missing or invalid bearer token")

    def run_dir(run_id: str) -> Path:
        d = root / run_id
        if not d.is_dir():
            raise ApiError(404, f"unknown run: {run_id}")
        return d

    def load_report(run_id: str) -> RunReport:
        try:
            return load_run(run_id, root)
        except IntegrityError as exc:
            raise ApiError(500, str(exc))

    def load_snapshot_config(d: Path) -> RunConfig:
        snap = d / "config.snapshot.json"
        if not snap.is_file():
            raise ApiError(500, f"run {d.name} has no config snapshot")
        return RunConfig.from_json(json.loads(snap.read_text(encoding="utf-8")))

    def load_shortlist(run_id: str) -> list[dict]:
        path = run_dir(run_id) / "shortlist.json"
        if not path.is_file():
            raise ApiError(404, f"run {run_id} has no shortlist yet")
        return json.loads(path.read_text(encoding="utf-8"))

    def check_decision_conflict(d: Path, criteria: DecisionCriteria,
                                force: bool) -> None:
        existing = load_run_decision(d)
        if existing is None or force:
            return
        if existing.criteria.to_json() == criteria.to_json():
            raise ApiError(409, "a decision with identical criteria is already "
                                "recorded for this run; pass force=true to replace it")

    # -- endpoints -----------------------------------------------------------

    @app.get("/runs")
    def list_runs():
        rows = []
        if root.is_dir():
            for d in sorted(root.iterdir(), reverse=True):
                if not d.is_dir():
                    continue
                status = registry.status(d.name)
                if status is None:
                    report_path = d / REPORT_FILE
                    if report_path.is_file():
                        status = json.loads(
                            report_path.read_text(encoding="utf-8")).get("status", "ok")
                    else:
                        status = "incomplete"
                rows.append({"run_id": d.name, "status": status})
        known = {r["run_id"] for r in rows}
        for run_id in list(registry._status):
            if run_id not in known:
                rows.append({"run_id": run_id, "status": registry.status(run_id)})
        rows.sort(key=lambda r: r["run_id"], reverse=True)
        return rows

    @app.post("/runs", status_code=202)
    def start_run(body: RunStartBody,
                  authorization: str | None = Header(None),
                  idempotency_key: str | None = Header(None, alias="Idempotency-Key")):
        require_token(authorization)
        if idempotency_key:
            prior = registry.run_for_key(idempotency_key)
            if prior:
                return {"run_id": prior}
        if body.config is not None:
            cfg = RunConfig.from_json(body.config)
        elif body.config_path:
            cfg = load_config(body.config_path)
        else:
            raise ApiError(422, "provide config inline or a config_path",
                           fields={"config": "missing"})
        cfg.store_root = str(root)
        cfg.validate()
        from .config import new_run_id
        run_id = new_run_id(cfg)
        if idempotency_key:
            registry.remember_key(idempotency_key, run_id)
        registry.start(run_id)

        def worker():
            try:
                report = run_pipeline(cfg, run_id=run_id)
                registry.finish(run_id, report.status)
            except Exception as exc:  # the run report carries the real status
                log.error("run %s failed: %s", run_id, exc)
                registry.finish(run_id, getattr(exc, "stage", None)
                                and f"failed:{exc.stage}" or "failed")

        threading.Thread(target=worker, name=f"run-{run_id}", daemon=True).start()
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        status = registry.status(run_id)
        if status == "running":
            return {"run_id": run_id, "status": "running"}
        run_dir(run_id)
        report = load_report(run_id)
        return report.to_json()

    @app.get("/runs/{run_id}/shortlist")
    def get_shortlist(run_id: str, top: int | None = None):
        cards = load_shortlist(run_id)
        if top is not None:
            if top < 1:
                raise ApiError(422, "top must be >= 1", fields={"top": f"got {top}"})
            cards = cards[:top]
        cfg = load_snapshot_config(run_dir(run_id))
        return [{"rank": i + 1, "id": c["id"], "grade": c["grade"],
                 "summary": c["summary"],
                 "flags": {"summary_over_limit":
                           len(c["summary"].split()) > cfg.summary_word_limit}}
                for i, c in enumerate(cards)]

    @app.post("/runs/{run_id}/decision", status_code=201)
    def post_decision(run_id: str, body: DecisionBody, force: bool = False,
                      authorization: str | None = Header(None)):
        require_token(authorization)
        d = run_dir(run_id)
        criteria = DecisionCriteria.from_json(body.criteria)
        with registry.decision_lock(run_id):
            check_decision_conflict(d, criteria, force)
            cards = [CandidateCard(c["id"], c["grade"], c["summary"])
                     for c in load_shortlist(run_id)]
            record = record_manual_decision(cards, criteria, body.selected_ids,
                                            body.rationale, user=body.decider,
                                            run_id=run_id)
            attach_decision(d, record)
        return record.to_json()

    @app.post("/runs/{run_id}/decision:auto", status_code=201)
    def post_auto_decision(run_id: str, body: AutoDecisionBody, force: bool = False,
                           authorization: str | None = Header(None)):
        require_token(authorization)
        d = run_dir(run_id)
        cfg = load_snapshot_config(d)
        criteria = (DecisionCriteria.from_json(body.criteria)
                    if body.criteria is not None else cfg.criteria)
        with registry.decision_lock(run_id):
            check_decision_conflict(d, criteria, force)
            cards = [CandidateCard(c["id"], c["grade"], c["summary"])
                     for c in load_shortlist(run_id)]
            client = ChatClient(cfg.backend_for("decide"))
            template = load_stage_template("decide", cfg.templates.get("decide"))
            record = decide_auto(cards, criteria, client, template, run_id=run_id,
                                 max_new_tokens=cfg.max_new_tokens)
            attach_decision(d, record)
        return record.to_json()

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        path = run_dir(run_id) / "metrics.json"
        if not path.is_file():
            raise ApiError(404, f"run {run_id} has no metrics (no gold data supplied)")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/runs/{run_id}/timing")
    def get_timing(run_id: str):
        path = run_dir(run_id) / "timing.json"
        if not path.is_file():
            raise ApiError(404, f"run {run_id} has no timing ledger")
        return json.loads(path.read_text(encoding="utf-8"))

    return app


def serve(store_root: str | Path = "runs", port: int = 8080,
          host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(create_app(store_root), host=host, port=port)
