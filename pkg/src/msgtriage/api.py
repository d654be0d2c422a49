"""HTTP facade over the aggregation artifacts for the dashboard and scripts.

Read endpoints serve from artifacts on disk (cube, overview, model reports)
and never mutate state; classification runs are launched through a single
POST that enqueues a background job, so a slow model run can never block an
interactive read. Responses carry aggregates only: message bodies are not
served unless the deployment explicitly opts in, and then only redacted.

Error payloads are {"error": {"code": ..., "message": ...}} with a
machine-readable code; missing artifacts answer 503 with remedy text.
"""
from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import insights
from .cascade import format_tally, persist_outcomes, run_cascade, write_tally
from .corpus import Redactor, ingest_messages
from .gateway import Gateway, load_registry
from .insights import AggregateCube, InsightsError, load_cube
from .keywords import compile_rules, load_rules
from .prompts import load_prompts
from .taxonomy import StageLabelSets, load_taxonomy

logger = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    artifacts_dir: Path
    token: str | None = None
    expose_bodies: bool = False
    static_dir: Path | None = None
    # Paths below are only needed for POST /runs (launching classifications).
    corpus_path: Path | None = None
    taxonomy_path: Path | None = None
    rules_path: Path | None = None
    prompts_path: Path | None = None
    registry_path: Path | None = None
    redaction_path: Path | None = None


@dataclass
class RunDescriptor:
    run_id: str
    model: str
    corpus: str
    status: str  # running | complete | failed
    created: str
    tally: dict | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "runId": self.run_id,
            "model": self.model,
            "corpus": self.corpus,
            "status": self.status,
            "created": self.created,
            "tally": self.tally,
            "error": self.error,
        }


class _ArtifactCache:
    """mtime-checked loader; a rebuilt artifact swaps in atomically."""

    def __init__(self, path: Path, loader):
        self._path = path
        self._loader = loader
        self._lock = threading.Lock()
        self._mtime: float | None = None
        self._value = None

    def get(self):
        if not self._path.exists():
            return None
        mtime = self._path.stat().st_mtime
        with self._lock:
            if self._value is None or mtime != self._mtime:
                self._value = self._loader(self._path)
                self._mtime = mtime
            return self._value


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def _missing(artifact: str, remedy: str) -> JSONResponse:
    return _error(
        503,
        "artifacts_missing",
        f"{artifact} not found in the artifacts directory; {remedy}",
    )


class RunRegistry:
    """In-memory run table, persisted to runs.json after every transition."""

    def __init__(self, artifacts_dir: Path):
        self._path = artifacts_dir / "runs.json"
        self._lock = threading.Lock()
        self._runs: dict[str, RunDescriptor] = {}
        if self._path.exists():
            for entry in json.loads(self._path.read_text(encoding="utf-8")):
                descriptor = RunDescriptor(
                    run_id=entry["runId"],
                    model=entry["model"],
                    corpus=entry["corpus"],
                    status=entry["status"],
                    created=entry["created"],
                    tally=entry.get("tally"),
                    error=entry.get("error"),
                )
                self._runs[descriptor.run_id] = descriptor

    def _persist(self) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        payload = [run.as_dict() for run in self._runs.values()]
        self._path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    def create(self, model: str, corpus: str) -> RunDescriptor:
        with self._lock:
            descriptor = RunDescriptor(
                run_id=f"run-{uuid.uuid4().hex[:12]}",
                model=model,
                corpus=corpus,
                status="running",
                created=datetime.now(timezone.utc).isoformat(),
            )
            self._runs[descriptor.run_id] = descriptor
            self._persist()
            return descriptor

    def finish(self, run_id: str, *, tally: dict | None = None, error: str | None = None) -> None:
        with self._lock:
            descriptor = self._runs[run_id]
            descriptor.status = "failed" if error else "complete"
            descriptor.tally = tally
            descriptor.error = error
            self._persist()

    def all(self) -> list[RunDescriptor]:
        with self._lock:
            return list(self._runs.values())

    def get(self, run_id: str) -> RunDescriptor | None:
        with self._lock:
            return self._runs.get(run_id)


def _execute_run(config: ServiceConfig, registry: RunRegistry, descriptor: RunDescriptor, workers: int) -> None:
    try:
        taxonomy = load_taxonomy(config.taxonomy_path)
        stage_labels = StageLabelSets.all_leaves(taxonomy)
        rules = load_rules(config.rules_path) if config.rules_path else []
        matcher = compile_rules(rules, stage_labels.c1)
        prompts = load_prompts(config.prompts_path)
        gateway = Gateway(load_registry(config.registry_path))
        redactor = Redactor.from_file(config.redaction_path) if config.redaction_path else None
        corpus = ingest_messages(config.corpus_path, redactor).corpus
        result = run_cascade(
            corpus,
            matcher,
            gateway,
            descriptor.model,
            prompts["P2"],
            prompts["P3"],
            stage_labels,
            workers=workers,
        )
        run_dir = config.artifacts_dir / "runs" / descriptor.run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        persist_outcomes(result.outcomes, run_dir / "outcomes.csv", redactor)
        write_tally(result.tally, run_dir / "tally.json")
        registry.finish(descriptor.run_id, tally=result.tally.as_dict())
        logger.info("run %s complete: %s", descriptor.run_id, format_tally(result.tally))
    except Exception as exc:
        logger.exception("run %s failed", descriptor.run_id)
        registry.finish(descriptor.run_id, error=f"{type(exc).__name__}: {exc}")


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="msgtriage API", version="1")
    artifacts = config.artifacts_dir
    cube_cache = _ArtifactCache(artifacts / "cube.json", load_cube)
    overview_cache = _ArtifactCache(
        artifacts / "overview.json",
        lambda p: json.loads(p.read_text(encoding="utf-8")),
    )
    reports_cache = _ArtifactCache(
        artifacts / "reports.json",
        lambda p: json.loads(p.read_text(encoding="utf-8")),
    )
    registry = RunRegistry(artifacts)

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if config.token and request.url.path.startswith("/api/"):
            supplied = request.headers.get("x-api-token")
            auth = request.headers.get("authorization", "")
            if auth.startswith("Bearer "):
                supplied = supplied or auth[len("Bearer "):]
            if supplied != config.token:
                return _error(401, "unauthorized", "missing or invalid API token")
        return await call_next(request)

    @app.get("/api/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/api/v1/overview")
    def get_overview():
        data = overview_cache.get()
        if data is None:
            return _missing("overview.json", "run `msgtriage aggregate` first")
        return data

    def _cube_or_503() -> AggregateCube | JSONResponse:
        cube = cube_cache.get()
        if cube is None:
            return _missing("cube.json", "run `msgtriage aggregate` first")
        return cube

    def _query_filters(request: Request) -> dict:
        params = request.query_params
        return {
            "team": params.get("team"),
            "office": params.get("office"),
            "date_from": params.get("from"),
            "date_to": params.get("to"),
        }

    @app.get("/api/v1/topics/distribution")
    def get_distribution(request: Request, level: str = "1"):
        cube = _cube_or_503()
        if isinstance(cube, JSONResponse):
            return cube
        filters = _query_filters(request)
        try:
            dist = insights.distribution(cube, level, **filters)
        except InsightsError as exc:
            return _error(400, _filter_error_code(str(exc)), str(exc))
        except ValueError as exc:
            return _error(400, "bad_filter", str(exc))
        items = []
        for label in dist.counts:
            item = {"label": label, "count": dist.counts[label], "share": dist.shares[label]}
            if dist.level == "leaf":
                # Level-1 ancestor rides along so clients can drill down
                # without re-deriving taxonomy structure.
                item["level1"] = cube.leaf_level1.get(label, label)
            items.append(item)
        return {
            "level": dist.level,
            "granularity": cube.granularity,
            "filters": _public_filters(filters),
            "total": dist.total,
            "items": items,
        }

    @app.get("/api/v1/topics/trend")
    def get_trend(request: Request, level: str = "1"):
        cube = _cube_or_503()
        if isinstance(cube, JSONResponse):
            return cube
        filters = _query_filters(request)
        try:
            series = insights.trend(cube, level, **filters)
        except InsightsError as exc:
            return _error(400, _filter_error_code(str(exc)), str(exc))
        except ValueError as exc:
            return _error(400, "bad_filter", str(exc))
        return {
            "level": series.level,
            "granularity": series.granularity,
            "filters": _public_filters(filters),
            "buckets": series.buckets,
            "series": series.series,
        }

    @app.get("/api/v1/models/reports")
    def get_reports():
        data = reports_cache.get()
        if data is None:
            return _missing("reports.json", "run `msgtriage compare` or `msgtriage evaluate` first")
        return data

    @app.get("/api/v1/models/heatmap")
    def get_heatmap():
        data = reports_cache.get()
        if data is None:
            return _missing("reports.json", "run `msgtriage compare` first")
        reports = data.get("reports", [])
        if not reports:
            return {"labels": [], "models": [], "values": []}
        labels = list(reports[0]["perClassF1"].keys())
        models = [report["model"] for report in reports]
        values = [
            [report["perClassF1"].get(label, 0.0) for report in reports]
            for label in labels
        ]
        return {"labels": labels, "models": models, "values": values}

    @app.get("/api/v1/runs")
    def list_runs():
        return {"runs": [run.as_dict() for run in registry.all()]}

    @app.get("/api/v1/runs/{run_id}")
    def get_run(run_id: str):
        descriptor = registry.get(run_id)
        if descriptor is None:
            return _error(404, "unknown_run", f"no run with id {run_id!r}")
        return descriptor.as_dict()

    @app.post("/api/v1/runs", status_code=202)
    def launch_run(payload: dict):
        model = payload.get("model")
        if not model:
            return _error(400, "bad_request", 'body must include {"model": ...}')
        required = ("corpus_path", "taxonomy_path", "prompts_path", "registry_path")
        missing = [name for name in required if getattr(config, name) is None]
        if missing:
            return _error(
                503,
                "runs_not_configured",
                f"service lacks {', '.join(missing)}; start `msgtriage serve` with "
                "--corpus/--taxonomy/--prompts/--registry to enable run launches",
            )
        workers = int(payload.get("workers", 1))
        descriptor = registry.create(model=model, corpus=str(config.corpus_path))
        thread = threading.Thread(
            target=_execute_run, args=(config, registry, descriptor, workers), daemon=True
        )
        thread.start()
        return descriptor.as_dict()

    @app.get("/api/v1/messages")
    def list_messages(limit: int = 50):
        if not config.expose_bodies:
            return _error(
                403,
                "bodies_not_exposed",
                "message bodies are not served; start the service with --expose-bodies to opt in",
            )
        if config.corpus_path is None:
            return _error(503, "runs_not_configured", "service has no corpus configured")
        redactor = (
            Redactor.from_file(config.redaction_path)
            if config.redaction_path
            else Redactor.default()
        )
        corpus = ingest_messages(config.corpus_path, redactor).corpus
        return {
            "messages": [
                {
                    "messageId": m.message_id,
                    "encounterId": m.encounter_id,
                    "threadIndex": m.thread_index,
                    "sentAt": m.sent_at.isoformat(),
                    "recipientPool": m.recipient_pool,
                    "body": m.body,
                }
                for m in corpus.messages[: max(limit, 0)]
            ]
        }

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True), name="ui")

    return app


def _filter_error_code(message: str) -> str:
    if "team" in message:
        return "unknown_team"
    if "office" in message:
        return "unknown_office"
    if "level" in message:
        return "bad_level"
    return "bad_filter"


def _public_filters(filters: dict) -> dict:
    return {
        "team": filters["team"],
        "office": filters["office"],
        "from": filters["date_from"],
        "to": filters["date_to"],
    }
