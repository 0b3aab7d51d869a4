"""Command-line entry points: serve, ingest, run-pipeline, export."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace

import click

from ..config import build_provider, load_config
from ..corpus.ingest import load_manifest
from .app import create_app
from .engine import Engine
from .store import WorkspaceStore

logger = logging.getLogger(__name__)


def _make_engine(config_path, workspace, replay):
    config = load_config(config_path)
    if workspace:
        config = replace(config, workspace_root=workspace)
    if replay:
        config = replace(
            config,
            provider=replace(config.provider, mode="replay", transcript_path=replay),
        )
    store = WorkspaceStore(config.workspace_root)
    provider = build_provider(config.provider)
    return Engine(store, provider, config)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--workspace", type=click.Path(), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8040, type=int)
@click.option("--frontend", type=click.Path(), default=None, help="Static UI directory to serve.")
def serve(config_path, workspace, host, port, frontend):
    """Run the HTTP service."""
    import uvicorn

    engine = _make_engine(config_path, workspace, replay=None)
    app = create_app(engine, frontend_dir=frontend)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--workspace", type=click.Path(), default=None)
def ingest(manifest, config_path, workspace):
    """Ingest a collection manifest into the workspace."""
    config = load_config(config_path)
    if workspace:
        config = replace(config, workspace_root=workspace)
    store = WorkspaceStore(config.workspace_root)
    from ..corpus.ingest import ingest_collection

    collection = ingest_collection(load_manifest(manifest))
    store.save_collection(collection)
    click.echo(
        json.dumps(
            {
                "collection_id": collection.collection_id,
                "name": collection.name,
                "chunk_counts": {p.paper_id: len(p.chunks) for p in collection.papers},
            },
            indent=2,
        )
    )


@main.command("run-pipeline")
@click.argument("collection_id")
@click.option("--facets", "facets_path", type=click.Path(exists=True), required=True,
              help="JSON list of facet definitions: [{name, description?, value_type?}].")
@click.option("--replay", type=click.Path(exists=True), default=None,
              help="Replay transcript for a fully offline batch run.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--workspace", type=click.Path(), default=None)
def run_pipeline(collection_id, facets_path, replay, config_path, workspace):
    """Headless batch: resume interrupted work, add columns, build taxonomies."""
    engine = _make_engine(config_path, workspace, replay)
    resumed = engine.resume_interrupted(collection_id)
    with open(facets_path, encoding="utf-8") as fh:
        facet_defs = json.load(fh)

    summary = {"collection_id": collection_id, "resumed": resumed, "columns": []}
    for spec in facet_defs:
        column = engine.add_column(
            collection_id,
            spec["name"],
            spec.get("description", ""),
            spec.get("value_type", "text"),
            wait=True,
        )
        taxonomy = engine.build_taxonomy(collection_id, column.column_id)
        cells = engine.store.load_cells(collection_id, column.column_id)
        summary["columns"].append(
            {
                "column_id": column.column_id,
                "status": column.status,
                "cells": {cell.paper_id: cell.status for cell in cells},
                "taxonomy_id": taxonomy.taxonomy_id,
                "taxonomy_roots": len(taxonomy.roots),
                "degraded": taxonomy.degraded,
            }
        )
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.argument("synthesis_id")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--workspace", type=click.Path(), default=None)
@click.option("--output", "-o", type=click.Path(), default=None)
def export(synthesis_id, config_path, workspace, output):
    """Export a synthesis as markdown with numbered references."""
    engine = _make_engine(config_path, workspace, replay=None)
    collection_id, _ = engine.find_synthesis(synthesis_id)
    markdown = engine.export_synthesis(collection_id, synthesis_id)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(markdown)
        click.echo(f"wrote {output}")
    else:
        click.echo(markdown)


if __name__ == "__main__":
    sys.exit(main())
