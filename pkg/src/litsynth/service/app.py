"""HTTP/JSON facade over the engine, plus a server-sent progress stream."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel, Field

from .. import __version__
from ..errors import (
    LitsynthError,
    NotFoundError,
    ProviderError,
    RejectionError,
    VersionConflictError,
)
from .engine import Engine

logger = logging.getLogger(__name__)

SSE_KEEPALIVE_SECONDS = 15.0


class ColumnBody(BaseModel):
    name: str
    description: str = ""
    value_type: str = "text"
    origin: str = "user"
    wait: bool = True


class MoveNodeBody(BaseModel):
    node_id: str
    new_parent_id: str | None = None
    version: int


class AddCategoryBody(BaseModel):
    parent_id: str | None = None
    label: str
    version: int


class SelectBody(BaseModel):
    node_ids: list[str]
    version: int


class SynthesizeBody(BaseModel):
    node_ids: list[str]
    version: int
    starred: list[str] = Field(default_factory=list)
    length_constraint: str | None = None


def _collection_summary(collection) -> dict:
    return {
        "collection_id": collection.collection_id,
        "name": collection.name,
        "papers": [
            {
                "paper_id": paper.paper_id,
                "title": paper.title,
                "abstract": paper.abstract,
                "authors": list(paper.authors),
                "year": paper.year,
                "venue": paper.venue,
                "citation_count": paper.citation_count,
                "chunk_count": len(paper.chunks),
                "full_text_available": paper.full_text_available,
            }
            for paper in collection.papers
        ],
    }


def _synthesis_wire(synthesis) -> dict:
    from ..synthesis import parse_citations

    data = synthesis.to_dict()
    for block in data["blocks"]:
        block["citations"] = [span.to_dict() for span in parse_citations(block["content"])]
    return data


def sse_event_stream(engine: Engine, collection_id: str, limit: int | None = None):
    """Server-sent event frames: a snapshot of current cell statuses, then deltas.

    An unbounded stream stays open for future columns (keep-alive comments
    between events); passing ``limit`` ends the stream after that many events,
    which suits one-shot polls and scripted clients.
    """
    snapshot, subscription = engine.subscribe(collection_id)
    sent = 0

    def frame(event) -> str:
        return f"data: {json.dumps(event.to_dict(), ensure_ascii=False)}\n\n"

    try:
        for event in snapshot:
            if limit is not None and sent >= limit:
                return
            yield frame(event)
            sent += 1
        while limit is None or sent < limit:
            event = subscription.get(timeout=SSE_KEEPALIVE_SECONDS)
            if event is None:
                yield ": keep-alive\n\n"
                continue
            yield frame(event)
            sent += 1
    finally:
        subscription.close()


def create_app(engine: Engine, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="litsynth", version=__version__)

    @app.exception_handler(LitsynthError)
    async def handle_engine_error(request: Request, exc: LitsynthError):
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, VersionConflictError):
            status = 409
        elif isinstance(exc, RejectionError):
            status = 400
        elif isinstance(exc, ProviderError):
            status = 502
        else:
            status = 500
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/collections")
    def create_collection(manifest: dict = Body(...)):
        collection = engine.create_collection(manifest)
        return _collection_summary(collection)

    @app.get("/collections")
    def list_collections():
        return [
            {"collection_id": c.collection_id, "name": c.name, "paper_count": len(c.papers)}
            for c in engine.list_collections()
        ]

    @app.get("/collections/{collection_id}")
    def get_collection(collection_id: str):
        return _collection_summary(engine.get_collection(collection_id))

    @app.post("/collections/{collection_id}/facets/suggest")
    def suggest(collection_id: str):
        return {"facets": [facet.to_dict() for facet in engine.suggest_facets(collection_id)]}

    @app.post("/collections/{collection_id}/columns")
    def add_column(collection_id: str, body: ColumnBody):
        column = engine.add_column(
            collection_id,
            body.name,
            body.description,
            body.value_type,
            body.origin,
            wait=body.wait,
        )
        return column.to_dict()

    @app.get("/collections/{collection_id}/table")
    def get_table(collection_id: str):
        return engine.get_table(collection_id)

    @app.get("/collections/{collection_id}/table/export")
    def export_table(collection_id: str, fmt: str = Query("markdown")):
        return PlainTextResponse(engine.export_table(collection_id, fmt))

    @app.get("/collections/{collection_id}/evidence")
    def get_evidence(collection_id: str, paper_id: str = Query(...), snippet: str = Query(...)):
        return engine.get_evidence(collection_id, paper_id, snippet)

    @app.post("/collections/{collection_id}/columns/{column_id}/taxonomy")
    def build_taxonomy(collection_id: str, column_id: str):
        return engine.taxonomy_wire(engine.build_taxonomy(collection_id, column_id))

    @app.get("/collections/{collection_id}/taxonomies/{taxonomy_id}")
    def get_taxonomy(collection_id: str, taxonomy_id: str):
        return engine.taxonomy_wire(engine.get_taxonomy(collection_id, taxonomy_id))

    @app.post("/collections/{collection_id}/taxonomies/{taxonomy_id}/move")
    def move_node(collection_id: str, taxonomy_id: str, body: MoveNodeBody):
        taxonomy = engine.move_node(
            collection_id, taxonomy_id, body.node_id, body.new_parent_id, body.version
        )
        return engine.taxonomy_wire(taxonomy)

    @app.post("/collections/{collection_id}/taxonomies/{taxonomy_id}/categories")
    def add_category(collection_id: str, taxonomy_id: str, body: AddCategoryBody):
        taxonomy = engine.add_category(
            collection_id, taxonomy_id, body.parent_id, body.label, body.version
        )
        return engine.taxonomy_wire(taxonomy)

    @app.post("/collections/{collection_id}/taxonomies/{taxonomy_id}/select")
    def select_nodes(collection_id: str, taxonomy_id: str, body: SelectBody):
        return engine.select(collection_id, taxonomy_id, body.node_ids, body.version)

    @app.post("/collections/{collection_id}/taxonomies/{taxonomy_id}/synthesize")
    def synthesize(collection_id: str, taxonomy_id: str, body: SynthesizeBody):
        synthesis = engine.generate_synthesis(
            collection_id,
            taxonomy_id,
            body.node_ids,
            body.version,
            starred=body.starred,
            length_constraint=body.length_constraint,
        )
        return _synthesis_wire(synthesis)

    @app.get("/collections/{collection_id}/syntheses/{synthesis_id}")
    def get_synthesis(collection_id: str, synthesis_id: str):
        return _synthesis_wire(engine.get_synthesis(collection_id, synthesis_id))

    @app.get("/collections/{collection_id}/syntheses/{synthesis_id}/export")
    def export_synthesis(collection_id: str, synthesis_id: str):
        return PlainTextResponse(engine.export_synthesis(collection_id, synthesis_id))

    @app.get("/collections/{collection_id}/events")
    def subscribe_progress(collection_id: str, limit: int | None = Query(None, ge=0)):
        return StreamingResponse(
            sse_event_stream(engine, collection_id, limit=limit),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
