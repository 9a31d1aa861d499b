"""REST layer over the run pipeline.

The API is versioned under /api/v1. Runs are identified by their
content-derived run id, so POSTing the same corpus and config twice is
idempotent; an explicit idempotency key gets a 409 only when it was already
used for different content. Errors share one envelope: {"code", "message"}
with codes invalid_config, not_found, not_ready, conflict,
provider_unavailable and internal.
"""
from __future__ import annotations

import io
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import IngestError, PipelineError, RunNotFoundError
from .ingest import LogRecord, parse_structured, record_to_obj, select_window
from .pipeline import (
    PipelineRun,
    RunConfig,
    RunStatus,
    compute_run_id,
    config_from_obj,
    config_to_obj,
    load_run,
    persist_run,
    report_to_obj,
    required_records,
    run_matrix,
)

API_PREFIX = "/api/v1"

ERROR_CODES = (
    "invalid_config",
    "not_found",
    "not_ready",
    "conflict",
    "provider_unavailable",
    "internal",
)


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    artifact_root: str = "runs"
    static_dir: str | None = None


_ENV_OVERRIDES = {
    "host": "LOGGROUPER_HOST",
    "port": "LOGGROUPER_PORT",
    "artifact_root": "LOGGROUPER_ARTIFACT_ROOT",
    "static_dir": "LOGGROUPER_STATIC_DIR",
}


def load_service_config(path: str | Path | None = None) -> ServiceConfig:
    """Load service settings from a JSON file, then apply env overrides.

    Environment variables LOGGROUPER_HOST, LOGGROUPER_PORT,
    LOGGROUPER_ARTIFACT_ROOT and LOGGROUPER_STATIC_DIR win over the file.
    """
    values: dict = {}
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValueError(f"cannot read service config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValueError(f"service config {path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ValueError(f"service config {path} must be a JSON object")
        unknown = set(loaded) - set(_ENV_OVERRIDES)
        if unknown:
            raise ValueError(f"service config {path}: unknown keys {sorted(unknown)}")
        values.update(loaded)
    for key, env_name in _ENV_OVERRIDES.items():
        if os.environ.get(env_name):
            values[key] = os.environ[env_name]
    if "port" in values:
        try:
            values["port"] = int(values["port"])
        except (TypeError, ValueError):
            raise ValueError(f"service config: port must be an integer, got {values['port']!r}")
        if not 1 <= values["port"] <= 65535:
            raise ValueError(f"service config: port {values['port']} out of range")
    if "host" in values and not str(values["host"]).strip():
        raise ValueError("service config: host must be non-empty")
    return ServiceConfig(**values)


@dataclass
class _RunState:
    run_id: str
    status: RunStatus
    config: RunConfig
    n_records: int = 0
    run: PipelineRun | None = None
    error: tuple[str, str] | None = None  # (code, message)


@dataclass
class _Registry:
    lock: threading.Lock = field(default_factory=threading.Lock)
    runs: dict[str, _RunState] = field(default_factory=dict)
    idempotency: dict[str, str] = field(default_factory=dict)
    logs: dict[str, LogRecord] = field(default_factory=dict)


class RunRequest(BaseModel):
    config: dict
    corpus_jsonl: str | None = None
    corpus_path: str | None = None
    idempotency_key: str | None = None


def _error(status_code: int, code: str, message: str, detail: object = None) -> JSONResponse:
    body: dict = {"code": code, "message": message}
    if detail is not None:
        body["detail"] = detail
    return JSONResponse(status_code=status_code, content=body)


def _failure_code(failures: dict[str, str]) -> str:
    if failures and all("provider" in reason for reason in failures.values()):
        return "provider_unavailable"
    return "internal"


def _failed_envelope(run: PipelineRun) -> tuple[str, str]:
    code = _failure_code(run.failures)
    message = "every combo failed: " + "; ".join(
        f"{key}: {reason}" for key, reason in sorted(run.failures.items())
    )
    return code, message


def create_app(
    config: ServiceConfig | None = None,
    executor: Callable[[Callable[[], None]], None] | None = None,
) -> FastAPI:
    """Build the API application.

    `executor` schedules run jobs; it defaults to a single background worker
    thread. Tests inject a synchronous or deferred executor to control when
    runs complete.
    """
    service_config = config if config is not None else ServiceConfig()
    app = FastAPI(title="loggrouper", docs_url=None, redoc_url=None)
    registry = _Registry()
    artifact_root = Path(service_config.artifact_root)
    pool: list[ThreadPoolExecutor] = []

    def submit(job: Callable[[], None]) -> None:
        if executor is not None:
            executor(job)
            return
        if not pool:
            pool.append(ThreadPoolExecutor(max_workers=1))
        pool[0].submit(job)

    app.state.service_config = service_config
    app.state.registry = registry

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception) -> JSONResponse:
        return _error(500, "internal", "internal server error")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        problems = [
            ".".join(str(part) for part in error["loc"]) + ": " + error["msg"]
            for error in exc.errors()
        ]
        return _error(400, "invalid_config", "malformed request", detail=problems)

    def _resolve(run_id: str) -> _RunState | None:
        with registry.lock:
            state = registry.runs.get(run_id)
        if state is not None:
            return state
        try:
            run = load_run(run_id, artifact_root)
        except RunNotFoundError:
            return None
        state = _RunState(
            run_id=run.run_id,
            status=run.status,
            config=run.config,
            n_records=run.n_records,
            run=run,
        )
        if run.status is RunStatus.FAILED:
            state.error = _failed_envelope(run)
        with registry.lock:
            registry.runs.setdefault(run_id, state)
            return registry.runs[run_id]

    @app.post(API_PREFIX + "/runs", status_code=202)
    def post_run(request: RunRequest):
        try:
            run_config = config_from_obj(request.config)
        except PipelineError as exc:
            return _error(400, "invalid_config", str(exc))
        if (request.corpus_jsonl is None) == (request.corpus_path is None):
            return _error(
                400, "invalid_config", "exactly one of corpus_jsonl or corpus_path is required"
            )
        if request.corpus_path is not None:
            corpus_file = Path(request.corpus_path)
            if not corpus_file.is_file():
                return _error(404, "not_found", f"no such corpus file: {corpus_file}")
            stream = corpus_file.read_text(encoding="utf-8")
        else:
            stream = request.corpus_jsonl
        try:
            parsed = parse_structured(io.StringIO(stream))
            corpus = select_window(parsed.records, run_config.window)
        except IngestError as exc:
            return _error(400, "invalid_config", str(exc))
        if len(corpus) < required_records(run_config):
            return _error(
                400,
                "invalid_config",
                f"corpus needs at least {required_records(run_config)} records, "
                f"got {len(corpus)}",
            )
        run_id = compute_run_id(corpus, run_config)

        with registry.lock:
            if request.idempotency_key is not None:
                claimed = registry.idempotency.get(request.idempotency_key)
                if claimed is not None and claimed != run_id:
                    return _error(
                        409,
                        "conflict",
                        f"idempotency key already used by run {claimed}",
                    )
                registry.idempotency[request.idempotency_key] = run_id
            existing = registry.runs.get(run_id)
            if existing is not None:
                return {"run_id": run_id, "status": existing.status.value}

        # an identical run persisted by an earlier process counts as existing
        resolved = _resolve(run_id)
        if resolved is not None:
            return {"run_id": run_id, "status": resolved.status.value}

        state = _RunState(
            run_id=run_id,
            status=RunStatus.PENDING,
            config=run_config,
            n_records=len(corpus),
        )
        with registry.lock:
            registry.runs[run_id] = state
            for record in corpus.records:
                registry.logs.setdefault(record.id, record)

        def job() -> None:
            with registry.lock:
                state.status = RunStatus.RUNNING
            try:
                run = run_matrix(corpus, run_config)
                try:
                    persist_run(run, artifact_root)
                except PipelineError:
                    pass  # an equal run already persisted these artifacts
            except Exception as exc:
                with registry.lock:
                    state.status = RunStatus.FAILED
                    state.error = ("internal", str(exc))
                return
            with registry.lock:
                state.run = run
                state.status = run.status
                state.n_records = run.n_records
                if run.status is RunStatus.FAILED:
                    state.error = _failed_envelope(run)

        submit(job)
        return {"run_id": run_id, "status": state.status.value}

    @app.get(API_PREFIX + "/runs/{run_id}")
    def get_run(run_id: str):
        state = _resolve(run_id)
        if state is None:
            return _error(404, "not_found", f"unknown run {run_id}")
        body: dict = {
            "run_id": state.run_id,
            "status": state.status.value,
            "n_records": state.n_records,
            "config": config_to_obj(state.config),
        }
        if state.run is not None and state.run.failures:
            body["failures"] = dict(sorted(state.run.failures.items()))
        if state.status is RunStatus.DONE and state.run is not None:
            body["report"] = report_to_obj(state.run.report)
        if state.status is RunStatus.FAILED and state.error is not None:
            body["error"] = {"code": state.error[0], "message": state.error[1]}
        return body

    def _groups_or_error(run_id: str):
        state = _resolve(run_id)
        if state is None:
            return None, _error(404, "not_found", f"unknown run {run_id}")
        if state.status is not RunStatus.DONE:
            return None, _error(
                409, "not_ready", f"run {run_id} is {state.status.value}; groups not available"
            )
        return state, None

    @app.get(API_PREFIX + "/runs/{run_id}/groups")
    def get_groups(
        run_id: str,
        limit: int = Query(default=50, ge=1, le=10_000),
        offset: int = Query(default=0, ge=0),
    ):
        state, failure = _groups_or_error(run_id)
        if failure is not None:
            return failure
        run = state.run
        best = run.assignments[run.report.best_combo.key]
        members: dict[int, list[str]] = {}
        for record_id, label in zip(best.record_ids, best.labels):
            members.setdefault(int(label), []).append(record_id)
        groups = []
        for label, ids in sorted(members.items(), key=lambda kv: (-len(kv[1]), kv[0])):
            cloud = run.clouds.get(label)
            phrases = [
                {"text": p.text, "score": p.score, "weight": p.weight}
                for p in (cloud.phrases if cloud else ())[:5]
            ]
            groups.append(
                {
                    "cluster": label,
                    "size": len(ids),
                    "noise": label == -1,
                    "member_ids": ids[offset : offset + limit],
                    "top_phrases": phrases,
                }
            )
        return {
            "run_id": run_id,
            "best_combo": {
                "vectorizer": run.report.best_combo.vectorizer.value,
                "preprocessed": run.report.best_combo.preprocessed,
                "algorithm": run.report.best_combo.algorithm.value,
            },
            "total_records": run.n_records,
            "groups": groups,
        }

    @app.get(API_PREFIX + "/runs/{run_id}/groups/{label}/wordcloud")
    def get_wordcloud(run_id: str, label: int):
        state, failure = _groups_or_error(run_id)
        if failure is not None:
            return failure
        cloud = state.run.clouds.get(label)
        if cloud is None:
            return _error(404, "not_found", f"run {run_id} has no group {label}")
        return cloud.to_payload()

    @app.get(API_PREFIX + "/logs/{record_id}")
    def get_log(record_id: str):
        with registry.lock:
            record = registry.logs.get(record_id)
        if record is None:
            return _error(404, "not_found", f"unknown record {record_id}")
        return record_to_obj(record)

    static_dir = service_config.static_dir
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
