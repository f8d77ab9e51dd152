"""HTTP surface for the companion UI and machine clients.

All bodies are JSON in the same dict encoding the journal and CLI use
(wire.py). Domain rejections map to 400 with a structured error body
``{"error": {"message", "field"}}``; unknown resources map to 404;
request-shape problems map to 400 with per-field messages. Mutation
responses carry the journaled object, server-assigned ids and
timestamps included.

The service holds no state above the store: restarting it on the same
data directory reproduces every response.
"""
from __future__ import annotations

import shutil
import tempfile
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field
from starlette.background import BackgroundTask

from .chunking import chunk_for_sink
from .config import Runtime
from .errors import FieldbookError, NotFoundError, ValidationError
from .export import export_table
from .harvest import (
    HARVEST_COLUMNS,
    HarvestSpec,
    harvest,
    harvest_to_table,
    parse_corpus_line,
)
from .model import PUBLIC_MICROBLOG, AnnotationKind, FeedFilter
from .sync import DELIVERED
from .wire import (
    annotation_to_dict,
    entry_to_dict,
    geotag_from_dict,
    parse_ts,
    schema_to_dict,
    scope_from_dict,
    ts,
)


class ColumnBody(BaseModel):
    name: str
    value_type: str = "text"


class CreateTableBody(BaseModel):
    title: str
    author: str
    columns: list[ColumnBody] = Field(default_factory=list)


class AddColumnBody(BaseModel):
    name: str
    value_type: str = "text"


class AddEntryBody(BaseModel):
    author: str
    values: dict[str, Any] = Field(default_factory=dict)
    geotag: dict | None = None


class ScopeBody(BaseModel):
    level: str = "table"
    row_index: int | None = None
    column_name: str | None = None


class AnnotateBody(BaseModel):
    text: str
    author: str
    scope: ScopeBody = Field(default_factory=ScopeBody)
    effective_at: str | None = None
    geotag: dict | None = None
    kind: str | None = None
    visibility: str | None = None
    extra_sinks: list[str] = Field(default_factory=list)


class HarvestBody(BaseModel):
    corpus: str
    author: str = "harvest"
    hashtags: list[str] = Field(default_factory=list)
    keywords: list[str] = Field(default_factory=list)
    require_geotag: bool = False
    table_id: str | None = None
    create_table: str | None = None


class ChunkPreviewBody(BaseModel):
    text: str
    max_post_length: int | None = None


def _error_body(message: str, field: str | None = None) -> dict:
    error: dict[str, Any] = {"message": message}
    if field:
        error["field"] = field
    return {"error": error}


def create_app(runtime: Runtime, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="fieldbook", version="0.1.0")
    app.state.runtime = runtime
    store = runtime.store
    engine = runtime.engine

    @app.exception_handler(ValidationError)
    async def handle_validation(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content=_error_body(str(exc), exc.field))

    @app.exception_handler(NotFoundError)
    async def handle_not_found(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content=_error_body(str(exc)))

    @app.exception_handler(FieldbookError)
    async def handle_fieldbook(request: Request, exc: FieldbookError):
        return JSONResponse(status_code=500, content=_error_body(str(exc)))

    @app.exception_handler(RequestValidationError)
    async def handle_request_shape(request: Request, exc: RequestValidationError):
        fields = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"), "message": err["msg"]}
            for err in exc.errors()
        ]
        body = _error_body("request body failed validation")
        body["error"]["fields"] = fields
        return JSONResponse(status_code=400, content=body)

    @app.get("/health")
    def health():
        return {"status": "ok", "tables": len(store.documents)}

    # -- tables -------------------------------------------------------

    @app.post("/tables", status_code=201)
    def create_table(body: CreateTableBody):
        schema = store.create_table(
            body.title, [(c.name, c.value_type) for c in body.columns], body.author
        )
        return schema_to_dict(schema)

    @app.get("/tables")
    def list_tables():
        return {
            "tables": [
                {
                    **schema_to_dict(d.schema),
                    "entry_count": len(d.entries),
                    "annotation_count": len(d.annotations),
                }
                for d in store.documents.values()
            ]
        }

    @app.get("/tables/{table_id}")
    def get_table(table_id: str):
        document = store.document(table_id)
        return {
            "schema": schema_to_dict(document.schema),
            "entries": [entry_to_dict(e) for e in document.entries],
            "annotation_count": len(document.annotations),
        }

    @app.post("/tables/{table_id}/columns")
    def add_column(table_id: str, body: AddColumnBody):
        return schema_to_dict(store.add_column(table_id, body.name, body.value_type))

    @app.post("/tables/{table_id}/entries", status_code=201)
    def add_entry(table_id: str, body: AddEntryBody):
        entry = store.add_entry(
            table_id, body.values, body.author, geotag=geotag_from_dict(body.geotag)
        )
        return entry_to_dict(entry)

    @app.post("/tables/{table_id}/annotations", status_code=201)
    def annotate(table_id: str, body: AnnotateBody):
        scope = scope_from_dict(
            {
                "level": body.scope.level,
                "table_id": table_id,
                "row_index": body.scope.row_index,
                "column_name": body.scope.column_name,
            }
        )
        annotation = store.annotate(
            scope,
            body.text,
            body.author,
            effective_at=parse_ts(body.effective_at) if body.effective_at else None,
            geotag=geotag_from_dict(body.geotag),
            kind=body.kind,
            visibility=body.visibility,
            extra_sinks=frozenset(body.extra_sinks),
        )
        return annotation_to_dict(annotation)

    # -- feed ---------------------------------------------------------

    @app.get("/feed")
    def feed(
        table_id: str | None = None,
        geotagged_only: bool = False,
        kind: str | None = None,
        author: str | None = None,
        since: str | None = None,
    ):
        feed_filter = FeedFilter(
            geotagged_only=geotagged_only,
            kind=AnnotationKind(kind) if kind else None,
            author=author,
            since=parse_ts(since) if since else None,
        )
        annotations = store.feed(table_id, feed_filter)
        return {"annotations": [annotation_to_dict(a) for a in annotations]}

    # -- sync ---------------------------------------------------------

    @app.get("/sync/status")
    def sync_status():
        return _status_dict(runtime)

    @app.post("/sync/flush")
    def sync_flush():
        attempts = runtime.tick_now()
        delivered = sum(1 for a in attempts if a.outcome == DELIVERED)
        return {
            "attempts": len(attempts),
            "delivered": delivered,
            "status": _status_dict(runtime),
        }

    @app.post("/sync/re-enqueue-failed")
    def re_enqueue_failed():
        return {"reset": engine.re_enqueue_failed(), "status": _status_dict(runtime)}

    @app.post("/chunk-preview")
    def chunk_preview(body: ChunkPreviewBody):
        limit = body.max_post_length
        if limit is None:
            desc = runtime.config.sinks.get(PUBLIC_MICROBLOG)
            limit = desc.max_post_length if desc and desc.max_post_length else 140
        payloads = chunk_for_sink(body.text, limit)
        return {
            "parts": len(payloads),
            "max_post_length": limit,
            "payload_lengths": [len(p) for p in payloads],
        }

    # -- harvest & export ----------------------------------------------

    @app.post("/harvest")
    def run_harvest(body: HarvestBody):
        posts = [
            parse_corpus_line(line, lineno)
            for lineno, line in enumerate(body.corpus.splitlines(), start=1)
            if line
        ]
        spec = HarvestSpec(
            hashtags=frozenset(body.hashtags),
            keywords=frozenset(body.keywords),
            require_geotag=body.require_geotag,
        )
        observations = harvest(posts, spec)
        result: dict[str, Any] = {
            "matched": len(observations),
            "observations": [
                {
                    "post_id": o.post_id,
                    "author": o.author,
                    "posted_at": ts(o.posted_at),
                    "text": o.text,
                    "matched_terms": list(o.matched_terms),
                    "geotag": (
                        {"latitude": o.latitude, "longitude": o.longitude}
                        if o.latitude is not None
                        else None
                    ),
                }
                for o in observations
            ],
        }
        table_id = body.table_id
        if table_id is None and body.create_table:
            table_id = store.create_table(
                body.create_table, list(HARVEST_COLUMNS), body.author
            ).table_id
        if table_id is not None:
            report = harvest_to_table(store, observations, table_id)
            result["table_id"] = table_id
            result["added"] = report.added
            result["skipped_duplicates"] = report.skipped_duplicates
        return result

    @app.get("/tables/{table_id}/export")
    def export(table_id: str):
        document = store.document(table_id)
        out_dir = Path(tempfile.mkdtemp(prefix="fieldbook-export-"))
        path = export_table(store, table_id, out_dir / f"{table_id}.xml")
        return FileResponse(
            path,
            media_type="application/xml",
            filename=f"{document.schema.title}.xml",
            background=BackgroundTask(shutil.rmtree, out_dir, ignore_errors=True),
        )

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _status_dict(runtime: Runtime) -> dict:
    now = runtime.clock()
    status = runtime.engine.sync_status(now)
    return {
        "per_sink": {
            sink: {
                "pending": s.pending,
                "in_flight": s.in_flight,
                "delivered": s.delivered,
                "failed_permanent": s.failed_permanent,
            }
            for sink, s in status.per_sink.items()
        },
        "oldest_pending_age_s": status.oldest_pending_age_s,
        "last_probe": status.last_probe,
        "last_probe_at": ts(status.last_probe_at) if status.last_probe_at else None,
        "last_tick_at": ts(status.last_tick_at) if status.last_tick_at else None,
        "ticks_skipped": status.ticks_skipped,
        "as_of": ts(now),
    }


def serve(runtime: Runtime, host: str, port: int, ui_dir: Path | None = None,
          sync_daemon: bool = False) -> None:
    """Run the service under uvicorn; optionally with the sync daemon."""
    import uvicorn

    app = create_app(runtime, ui_dir=ui_dir)
    if sync_daemon:
        start_sync_daemon(runtime)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def start_sync_daemon(runtime: Runtime):
    """Background pusher: one tick every tick_interval_s."""
    import threading
    import time

    stop = threading.Event()

    def loop():
        while not stop.wait(runtime.config.tick_interval_s):
            try:
                runtime.tick_now()
            except Exception:
                # A failing tick must not kill the pusher; failures are
                # visible in sync status and item attempt histories.
                pass

    thread = threading.Thread(target=loop, name="fieldbook-sync", daemon=True)
    thread.start()
    return stop
