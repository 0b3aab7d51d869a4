"""Thin HTTP client for a scholarly-metadata API (graph batch endpoint shape).

Absent fields stay absent; nothing is fabricated. Tests inject an
``httpx`` transport serving recorded responses, so no test touches the
network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import httpx

from ..errors import MetadataFetchError

logger = logging.getLogger(__name__)

BATCH_FIELDS = "title,abstract,authors,year,venue,citationCount"


@dataclass(frozen=True)
class PaperMetadata:
    paper_id: str
    found: bool = True
    title: str | None = None
    abstract: str | None = None
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    citation_count: int | None = None


def _authors_from(record: dict) -> tuple[str, ...]:
    names = []
    for author in record.get("authors") or ():
        if isinstance(author, str):
            names.append(author)
        elif isinstance(author, dict) and author.get("name"):
            names.append(author["name"])
    return tuple(names)


class MetadataClient:
    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 10.0,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"x-api-key": api_key} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url, headers=headers, timeout=timeout, transport=transport
        )

    def fetch_metadata(self, paper_ids: Sequence[str]) -> list[PaperMetadata]:
        """Fetch metadata records in request order; unknown ids come back not-found."""
        if not paper_ids:
            raise ValueError("paper_ids must be non-empty")
        try:
            response = self._client.post(
                "/paper/batch",
                params={"fields": BATCH_FIELDS},
                json={"ids": list(paper_ids)},
            )
            response.raise_for_status()
            records = response.json()
        except httpx.HTTPError as exc:
            raise MetadataFetchError(
                f"metadata fetch failed: {exc}", failed_ids=paper_ids
            ) from exc

        results: list[PaperMetadata] = []
        for paper_id, record in zip(paper_ids, records):
            if record is None:
                results.append(PaperMetadata(paper_id=paper_id, found=False))
                continue
            results.append(
                PaperMetadata(
                    paper_id=paper_id,
                    found=True,
                    title=record.get("title"),
                    abstract=record.get("abstract"),
                    authors=_authors_from(record),
                    year=record.get("year"),
                    venue=record.get("venue"),
                    citation_count=record.get("citationCount"),
                )
            )
        if len(records) != len(paper_ids):
            logger.warning(
                "metadata batch returned %d records for %d ids", len(records), len(paper_ids)
            )
        return results

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "MetadataClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
