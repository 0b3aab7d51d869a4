"""Document types: papers, their section-tagged chunks, and collections.

All three are frozen; a collection never changes after ingestion, which
makes it safe to share across population threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import NotFoundError


@dataclass(frozen=True)
class Chunk:
    index: int
    section_path: tuple[str, ...]
    text: str
    char_start: int
    char_end: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "section_path": list(self.section_path),
            "text": self.text,
            "char_start": self.char_start,
            "char_end": self.char_end,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Chunk":
        return cls(
            index=data["index"],
            section_path=tuple(data.get("section_path") or ()),
            text=data["text"],
            char_start=data["char_start"],
            char_end=data["char_end"],
        )


@dataclass(frozen=True)
class Paper:
    paper_id: str
    title: str
    abstract: str = ""
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    citation_count: int | None = None
    chunks: tuple[Chunk, ...] = ()
    full_text_available: bool = False

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "title": self.title,
            "abstract": self.abstract,
            "authors": list(self.authors),
            "year": self.year,
            "venue": self.venue,
            "citation_count": self.citation_count,
            "chunks": [c.to_dict() for c in self.chunks],
            "full_text_available": self.full_text_available,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Paper":
        return cls(
            paper_id=data["paper_id"],
            title=data["title"],
            abstract=data.get("abstract") or "",
            authors=tuple(data.get("authors") or ()),
            year=data.get("year"),
            venue=data.get("venue"),
            citation_count=data.get("citation_count"),
            chunks=tuple(Chunk.from_dict(c) for c in data.get("chunks") or ()),
            full_text_available=bool(data.get("full_text_available")),
        )


@dataclass(frozen=True)
class Collection:
    collection_id: str
    name: str
    papers: tuple[Paper, ...] = field(default=())

    def paper_ids(self) -> tuple[str, ...]:
        return tuple(p.paper_id for p in self.papers)

    def paper(self, paper_id: str) -> Paper:
        for paper in self.papers:
            if paper.paper_id == paper_id:
                return paper
        raise NotFoundError(f"paper {paper_id!r} not in collection {self.collection_id!r}")

    def to_dict(self) -> dict:
        return {
            "collection_id": self.collection_id,
            "name": self.name,
            "papers": [p.to_dict() for p in self.papers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Collection":
        return cls(
            collection_id=data["collection_id"],
            name=data["name"],
            papers=tuple(Paper.from_dict(p) for p in data.get("papers") or ()),
        )
