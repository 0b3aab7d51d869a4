"""Evidence attribution: find the source chunk for a snippet.

The snippet and every chunk of the paper are embedded; the chunk with
maximal cosine similarity wins, ties broken by lowest chunk index. Chunk
vectors are cached per (paper, embedding model) and optionally persisted.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus.models import Paper
from .provider.client import Provider


@dataclass(frozen=True)
class EvidenceLocation:
    paper_id: str
    chunk_index: int
    score: float
    section_path: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "chunk_index": self.chunk_index,
            "score": self.score,
            "section_path": list(self.section_path),
        }


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"vectors must share one dimension, got {va.shape} and {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine is undefined for zero-norm vectors")
    return float(np.dot(va, vb) / (norm_a * norm_b))


class ChunkVectorCache:
    """Per-paper chunk embeddings, computed once per embedding model.

    A store with ``save_vectors``/``load_vectors`` persists entries across
    processes; the model id is part of every key, so switching models
    invalidates naturally. Single writer per paper, any number of readers.
    """

    def __init__(self, provider: Provider, store=None):
        self.provider = provider
        self.store = store
        self._memory: dict[tuple[str, str], list[list[float]]] = {}
        self._lock = threading.Lock()

    def vectors(self, paper: Paper) -> list[list[float]]:
        key = (self.provider.embedding_model, paper.paper_id)
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self.store is not None:
            stored = self.store.load_vectors(paper.paper_id, self.provider.embedding_model)
            if stored is not None and len(stored) == len(paper.chunks):
                with self._lock:
                    self._memory[key] = stored
                return stored
        computed = self.provider.embed_texts([chunk.text for chunk in paper.chunks])
        if self.store is not None:
            self.store.save_vectors(paper.paper_id, self.provider.embedding_model, computed)
        with self._lock:
            self._memory[key] = computed
        return computed


def locate_evidence(
    provider: Provider,
    snippet: str,
    paper: Paper,
    cache: ChunkVectorCache | None = None,
) -> EvidenceLocation:
    """Return the chunk with maximal cosine similarity to the snippet."""
    if not snippet.strip():
        raise ValueError("snippet must be non-empty")
    if not paper.chunks:
        raise ValueError(f"paper {paper.paper_id!r} has no chunks to attribute against")
    snippet_vector = provider.embed_texts([snippet])[0]
    chunk_vectors = (
        cache.vectors(paper)
        if cache is not None
        else provider.embed_texts([chunk.text for chunk in paper.chunks])
    )
    best_index = 0
    best_score = cosine(snippet_vector, chunk_vectors[0])
    for index in range(1, len(chunk_vectors)):
        score = cosine(snippet_vector, chunk_vectors[index])
        if score > best_score:
            best_score = score
            best_index = index
    chunk = paper.chunks[best_index]
    return EvidenceLocation(
        paper_id=paper.paper_id,
        chunk_index=best_index,
        score=best_score,
        section_path=chunk.section_path,
    )
