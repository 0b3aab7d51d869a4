"""Literature review table: per-(paper, facet) summaries and snippets.

Extraction produces a dense paragraph per facet from a paper's chunks;
distillation compresses those paragraphs into one-sentence snippets, keyed
by paper id. Column population fans extraction out across papers, runs one
distillation pass per facet, and settles cells as results arrive.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from io import StringIO
from typing import Callable, Mapping, Sequence

from .corpus.models import Collection, Paper
from .errors import LitsynthError, StructuredOutputError
from .facets import Facet
from .provider.client import CompletionRequest, ModelProfile, Provider
from .provider.templates import EXTRACTED_VALUES_SHAPE

logger = logging.getLogger(__name__)

COLUMN_PENDING = "pending"
COLUMN_POPULATING = "populating"
COLUMN_READY = "ready"
COLUMN_PARTIAL_FAILURE = "partial-failure"

CELL_PENDING = "pending"
CELL_READY = "ready"
CELL_EMPTY = "empty"
CELL_FAILED = "failed"

SNIPPET_WORD_LIMIT = 20

NULL_CELL_TEXT = "—"


def snippet_overlong(snippet: str | None) -> bool:
    return snippet is not None and len(snippet.split()) > SNIPPET_WORD_LIMIT


@dataclass
class Cell:
    paper_id: str
    column_id: str
    summary: str | None = None
    snippet: str | None = None
    status: str = CELL_PENDING
    snippet_overlong: bool = False

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "column_id": self.column_id,
            "summary": self.summary,
            "snippet": self.snippet,
            "status": self.status,
            "snippet_overlong": self.snippet_overlong,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Cell":
        return cls(
            paper_id=data["paper_id"],
            column_id=data["column_id"],
            summary=data.get("summary"),
            snippet=data.get("snippet"),
            status=data.get("status", CELL_PENDING),
            snippet_overlong=bool(data.get("snippet_overlong")),
        )


@dataclass
class Column:
    column_id: str
    facet: Facet
    status: str = COLUMN_PENDING
    created_at: str = ""
    creation_index: int = 0

    def to_dict(self) -> dict:
        return {
            "column_id": self.column_id,
            "facet": self.facet.to_dict(),
            "status": self.status,
            "created_at": self.created_at,
            "creation_index": self.creation_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Column":
        return cls(
            column_id=data["column_id"],
            facet=Facet.from_dict(data["facet"]),
            status=data.get("status", COLUMN_PENDING),
            created_at=data.get("created_at", ""),
            creation_index=data.get("creation_index", 0),
        )


def build_extraction_context(paper: Paper, context_budget: int) -> str:
    """Concatenate chunks with section headers, earlier sections first.

    Truncated to the character budget; front-loading keeps the abstract and
    introduction, where facet answers usually live.
    """
    parts = [f"Title: {paper.title}"]
    last_path: tuple[str, ...] | None = None
    for chunk in paper.chunks:
        if chunk.section_path != last_path:
            parts.append(f"\n## {' > '.join(chunk.section_path) or 'Body'}")
            last_path = chunk.section_path
        parts.append(chunk.text)
    context = "\n".join(parts)
    if len(context) > context_budget:
        logger.info(
            "truncating extraction context for %s: %d -> %d chars",
            paper.paper_id,
            len(context),
            context_budget,
        )
        context = context[:context_budget]
    return context


def _facets_block(facets: Sequence[Facet]) -> str:
    lines = []
    for number, facet in enumerate(facets, start=1):
        lines.append(f"{number}. Name: {facet.name}")
        if facet.description:
            lines.append(f"   Description: {facet.description}")
    return "\n".join(lines)


def extract_values(
    provider: Provider,
    paper: Paper,
    facets: Sequence[Facet],
    *,
    profile: ModelProfile,
    context_budget: int = 60000,
    max_repair_attempts: int = 1,
) -> list[tuple[str, str | None]]:
    """Extract one paragraph-or-null per facet from a paper, aligned by facet."""
    if not facets:
        raise ValueError("facets must be non-empty")
    if not paper.chunks:
        raise ValueError(f"paper {paper.paper_id!r} has no chunks to extract from")
    shape = dict(EXTRACTED_VALUES_SHAPE)
    shape["minItems"] = len(facets)
    shape["maxItems"] = len(facets)
    request = CompletionRequest(
        template_id="value-extraction",
        variables={
            "context": build_extraction_context(paper, context_budget),
            "facets": _facets_block(facets),
        },
        model_profile=profile,
        max_repair_attempts=max_repair_attempts,
        expected_shape=shape,
    )
    payload = provider.complete_structured(request)

    by_id: dict[int, str | None] = {}
    for item in payload:
        try:
            facet_number = int(item["facet_id"])
        except (TypeError, ValueError):
            raise StructuredOutputError(
                f"extraction returned a non-numeric facet_id {item['facet_id']!r}",
                violations=[f"facet_id {item['facet_id']!r} is not a number"],
            ) from None
        by_id[facet_number] = item["value"]
    expected = set(range(1, len(facets) + 1))
    if set(by_id) != expected:
        raise StructuredOutputError(
            f"extraction facet ids {sorted(by_id)} do not match expected {sorted(expected)}",
            violations=["facet_id set mismatch"],
        )
    results: list[tuple[str, str | None]] = []
    for number, facet in enumerate(facets, start=1):
        value = by_id[number]
        if value is not None and not value.strip():
            value = None
        results.append((facet.facet_id, value))
    return results


def distill_snippets(
    provider: Provider,
    facet: Facet,
    summaries: Mapping[str, str | None],
    *,
    profile: ModelProfile,
    max_repair_attempts: int = 1,
) -> dict[str, str | None]:
    """Distill paragraph summaries into one-sentence snippets, keyed by paper id.

    Null summaries map to null snippets without consulting the model; an
    all-null input short-circuits entirely.
    """
    if not summaries:
        raise ValueError("summaries must be non-empty")
    if all(value is None for value in summaries.values()):
        return {paper_id: None for paper_id in summaries}

    shape = {
        "type": "object",
        "properties": {key: {"type": ["string", "null"]} for key in summaries},
        "required": list(summaries),
        "additionalProperties": False,
    }
    request = CompletionRequest(
        template_id="value-distillation",
        variables={
            "facet": facet.name,
            "facet_description": facet.description,
            "excerpts": json.dumps(dict(summaries), indent=2, ensure_ascii=False),
        },
        model_profile=profile,
        max_repair_attempts=max_repair_attempts,
        expected_shape=shape,
    )
    payload = provider.complete_structured(request)

    snippets: dict[str, str | None] = {}
    for paper_id, summary in summaries.items():
        value = payload.get(paper_id)
        if summary is None or value is None or not value.strip():
            snippets[paper_id] = None
        else:
            snippets[paper_id] = value.strip()
    return snippets


@dataclass
class PopulationResult:
    column: Column
    cells: list[Cell] = field(default_factory=list)


def populate_column(
    collection: Collection,
    column: Column,
    provider: Provider,
    store,
    *,
    profile: ModelProfile,
    context_budget: int = 60000,
    concurrency_limit: int = 8,
    emit: Callable[[Cell], None] | None = None,
    resume: bool = False,
) -> PopulationResult:
    """Populate every cell of a column, fanning extraction out across papers.

    Per-paper failures settle their own cell as failed and leave the rest
    untouched. Extracted paragraphs are persisted as they arrive so an
    interrupted run can resume without repeating finished work; the staging
    area is cleared once the column settles. Papers with no chunks settle as
    empty without a model call.
    """
    collection_id = collection.collection_id
    facet = column.facet

    def notify(cell: Cell) -> None:
        if emit is not None:
            emit(cell)

    column.status = COLUMN_POPULATING
    store.save_column(collection_id, column)

    settled: dict[str, Cell] = {}
    summaries: dict[str, str | None] = {}
    if resume:
        for cell in store.load_cells(collection_id, column.column_id):
            settled[cell.paper_id] = cell
        summaries.update(store.load_summaries(collection_id, column.column_id))

    todo = [
        paper
        for paper in collection.papers
        if paper.paper_id not in settled and paper.paper_id not in summaries
    ]

    def run_extraction(paper: Paper) -> str | None:
        if not paper.chunks:
            return None
        values = extract_values(
            provider, paper, [facet], profile=profile, context_budget=context_budget
        )
        return values[0][1]

    if todo:
        with ThreadPoolExecutor(max_workers=max(1, concurrency_limit)) as executor:
            futures = {executor.submit(run_extraction, paper): paper for paper in todo}
            for future in as_completed(futures):
                paper = futures[future]
                try:
                    summary = future.result()
                except Exception as exc:  # noqa: BLE001 - cell-level failure isolation
                    logger.warning("extraction failed for %s: %s", paper.paper_id, exc)
                    cell = Cell(paper.paper_id, column.column_id, status=CELL_FAILED)
                    settled[paper.paper_id] = cell
                    store.save_cell(collection_id, cell)
                    notify(cell)
                else:
                    summaries[paper.paper_id] = summary
                    store.save_summary(collection_id, column.column_id, paper.paper_id, summary)

    remaining = {
        paper.paper_id: summaries[paper.paper_id]
        for paper in collection.papers
        if paper.paper_id in summaries and paper.paper_id not in settled
    }
    snippets: dict[str, str | None] = {}
    distill_failed: set[str] = set()
    if remaining:
        try:
            snippets = distill_snippets(provider, facet, remaining, profile=profile)
        except LitsynthError as exc:
            logger.warning("distillation failed for column %s: %s", column.column_id, exc)
            distill_failed = {pid for pid, value in remaining.items() if value is not None}

    for paper in collection.papers:
        paper_id = paper.paper_id
        if paper_id in settled:
            continue
        summary = remaining.get(paper_id)
        if paper_id in distill_failed:
            cell = Cell(paper_id, column.column_id, summary=summary, status=CELL_FAILED)
        elif summary is None:
            cell = Cell(paper_id, column.column_id, status=CELL_EMPTY)
        else:
            snippet = snippets.get(paper_id)
            cell = Cell(
                paper_id,
                column.column_id,
                summary=summary,
                snippet=snippet,
                status=CELL_READY,
                snippet_overlong=snippet_overlong(snippet),
            )
        settled[paper_id] = cell
        store.save_cell(collection_id, cell)
        notify(cell)

    ordered = [settled[paper.paper_id] for paper in collection.papers]
    column.status = (
        COLUMN_PARTIAL_FAILURE
        if any(cell.status == CELL_FAILED for cell in ordered)
        else COLUMN_READY
    )
    store.save_column(collection_id, column)
    store.clear_summaries(collection_id, column.column_id)
    return PopulationResult(column=column, cells=ordered)


def table_view(
    collection: Collection,
    columns: Sequence[Column],
    cells: Mapping[tuple[str, str], Cell],
) -> dict:
    """Read-only table snapshot: rows in collection order, columns in creation order."""
    ordered_columns = sorted(columns, key=lambda c: c.creation_index)
    rows = []
    for paper in collection.papers:
        row_cells = {}
        for column in ordered_columns:
            cell = cells.get((paper.paper_id, column.column_id))
            row_cells[column.column_id] = (
                cell.to_dict()
                if cell is not None
                else Cell(paper.paper_id, column.column_id).to_dict()
            )
        rows.append(
            {
                "paper_id": paper.paper_id,
                "title": paper.title,
                "year": paper.year,
                "authors": list(paper.authors),
                "citation_count": paper.citation_count,
                "full_text_available": paper.full_text_available,
                "cells": row_cells,
            }
        )
    return {
        "collection_id": collection.collection_id,
        "columns": [column.to_dict() for column in ordered_columns],
        "rows": rows,
    }


def _cell_text(row: dict, column_id: str) -> str:
    snippet = row["cells"][column_id].get("snippet")
    return snippet if snippet else NULL_CELL_TEXT


def export_table_csv(view: dict) -> str:
    import csv

    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    headers = ["Paper"] + [column["facet"]["name"] for column in view["columns"]]
    writer.writerow(headers)
    for row in view["rows"]:
        writer.writerow(
            [row["title"]] + [_cell_text(row, c["column_id"]) for c in view["columns"]]
        )
    return buffer.getvalue()


def export_table_markdown(view: dict) -> str:
    def escape(text: str) -> str:
        return text.replace("|", "\\|")

    headers = ["Paper"] + [column["facet"]["name"] for column in view["columns"]]
    lines = [
        "| " + " | ".join(escape(h) for h in headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in view["rows"]:
        values = [row["title"]] + [_cell_text(row, c["column_id"]) for c in view["columns"]]
        lines.append("| " + " | ".join(escape(v) for v in values) + " |")
    return "\n".join(lines) + "\n"
