"""Collection ingestion: manifest validation, normalization, and chunking.

A manifest is a JSON document of the form::

    {
      "name": "...",
      "collection_id": "...",            # optional; derived from name if absent
      "papers": [
        {
          "paper_id": "CorpusId:123",
          "title": "...",
          "abstract": "...",             # optional
          "authors": ["..."],            # optional
          "year": 2024,                  # optional
          "venue": "...",                # optional
          "citation_count": 10,          # optional
          "full_text": [                 # optional, pre-parsed structured text
            {"section_path": ["Introduction"], "text": "..."}
          ]
        }
      ]
    }

Chunk granularity is one paragraph; paragraphs longer than the configured
limit are split at sentence boundaries. Papers without full text fall back
to a single chunk holding the abstract.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import DuplicatePaperError, ManifestError
from ..util import stable_id
from .models import Chunk, Collection, Paper

DEFAULT_MAX_CHUNK_CHARS = 2000
MIN_MAX_CHUNK_CHARS = 200

_PARAGRAPH_RE = re.compile(r"\n\s*\n")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?]) ")


def normalize_whitespace(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim the ends."""
    return " ".join(text.split())


def split_long_paragraph(paragraph: str, max_chars: int) -> list[str]:
    """Split a whitespace-normalized paragraph at sentence boundaries.

    Pieces rejoined with single spaces reproduce the paragraph exactly; a
    single sentence longer than the limit is kept whole.
    """
    if len(paragraph) <= max_chars:
        return [paragraph]
    pieces: list[str] = []
    current = ""
    for sentence in _SENTENCE_SPLIT_RE.split(paragraph):
        if not current:
            current = sentence
        elif len(current) + 1 + len(sentence) <= max_chars:
            current = f"{current} {sentence}"
        else:
            pieces.append(current)
            current = sentence
    if current:
        pieces.append(current)
    return pieces


def chunk_document(
    full_text: Sequence[Mapping], max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS
) -> list[Chunk]:
    """Chunk section-annotated text into paragraph-grained chunks.

    ``full_text`` is a sequence of ``{"section_path": [...], "text": "..."}``
    segments. Char spans index into the normalized document text formed by
    joining chunk texts with single separator characters, so spans are
    non-overlapping and ascending by construction.
    """
    if max_chunk_chars < MIN_MAX_CHUNK_CHARS:
        raise ValueError(f"max_chunk_chars must be >= {MIN_MAX_CHUNK_CHARS}, got {max_chunk_chars}")
    chunks: list[Chunk] = []
    cursor = 0
    for segment in full_text:
        section_path = tuple(segment.get("section_path") or ())
        for paragraph in _PARAGRAPH_RE.split(segment.get("text") or ""):
            normalized = normalize_whitespace(paragraph)
            if not normalized:
                continue
            for piece in split_long_paragraph(normalized, max_chunk_chars):
                start = cursor
                end = start + len(piece)
                chunks.append(
                    Chunk(
                        index=len(chunks),
                        section_path=section_path,
                        text=piece,
                        char_start=start,
                        char_end=end,
                    )
                )
                cursor = end + 1
    return chunks


def _abstract_chunk(abstract: str) -> tuple[Chunk, ...]:
    normalized = normalize_whitespace(abstract)
    if not normalized:
        return ()
    return (
        Chunk(
            index=0,
            section_path=("Abstract",),
            text=normalized,
            char_start=0,
            char_end=len(normalized),
        ),
    )


def ingest_collection(
    manifest: Mapping,
    *,
    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
) -> Collection:
    """Build a normalized, chunked Collection from a manifest.

    Papers that provide no full text keep a single abstract chunk; papers
    with neither full text nor abstract end up with no chunks at all.
    Ingestion is a pure function of the manifest, hence idempotent.
    """
    name = (manifest.get("name") or "").strip()
    if not name:
        raise ManifestError("manifest must declare a non-empty 'name'")
    entries = manifest.get("papers") or []
    if not entries:
        raise ManifestError("manifest must declare at least one paper")

    papers: list[Paper] = []
    seen: set[str] = set()
    for position, entry in enumerate(entries):
        paper_id = (entry.get("paper_id") or "").strip()
        if not paper_id:
            raise ManifestError(f"paper entry {position} is missing 'paper_id'")
        if paper_id in seen:
            raise DuplicatePaperError(paper_id)
        seen.add(paper_id)
        title = (entry.get("title") or "").strip()
        if not title:
            raise ManifestError(f"paper {paper_id!r} is missing 'title'")

        abstract = entry.get("abstract") or ""
        full_text = entry.get("full_text") or []
        if full_text:
            chunks = tuple(chunk_document(full_text, max_chunk_chars))
        else:
            chunks = ()
        full_text_available = bool(chunks)
        if not chunks:
            chunks = _abstract_chunk(abstract)

        papers.append(
            Paper(
                paper_id=paper_id,
                title=title,
                abstract=abstract,
                authors=tuple(entry.get("authors") or ()),
                year=entry.get("year"),
                venue=entry.get("venue"),
                citation_count=entry.get("citation_count"),
                chunks=chunks,
                full_text_available=full_text_available,
            )
        )

    collection_id = (manifest.get("collection_id") or "").strip() or stable_id("coll", name)
    return Collection(collection_id=collection_id, name=name, papers=tuple(papers))


def load_manifest(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
