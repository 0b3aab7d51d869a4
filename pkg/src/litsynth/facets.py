"""Collection-aware facet discovery.

Candidate facets are induced from randomly sampled paper subsets (context is
the subset's titles and abstracts), then consolidated into one deduplicated
final set. A local post-merge pass removes case-insensitive name duplicates
the model merge missed, so the uniqueness invariant holds mechanically.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Sequence

from .corpus.models import Collection, Paper
from .errors import ProviderError, RejectionError
from .provider.client import CompletionRequest, ModelProfile, Provider
from .util import stable_id

logger = logging.getLogger(__name__)

VALUE_TYPES = ("text", "number", "boolean")

ORIGIN_USER = "user"
ORIGIN_SUGGESTED = "suggested"


@dataclass(frozen=True)
class Facet:
    facet_id: str
    name: str
    description: str = ""
    value_type: str = "text"
    origin: str = ORIGIN_USER

    def __post_init__(self):
        if not self.name.strip():
            raise RejectionError("facet name must be non-empty")
        if self.value_type not in VALUE_TYPES:
            raise RejectionError(
                f"facet value_type must be one of {VALUE_TYPES}, got {self.value_type!r}"
            )

    def to_dict(self) -> dict:
        return {
            "facet_id": self.facet_id,
            "name": self.name,
            "description": self.description,
            "value_type": self.value_type,
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Facet":
        return cls(
            facet_id=data["facet_id"],
            name=data["name"],
            description=data.get("description") or "",
            value_type=data.get("value_type") or "text",
            origin=data.get("origin") or ORIGIN_USER,
        )


@dataclass(frozen=True)
class FacetCandidate:
    name: str
    description: str
    source_subset_index: int


@dataclass(frozen=True)
class FacetDiscoveryConfig:
    n: int = 4
    k: int = 4
    max_facets: int = 20
    seed: int = 0


def normalized_name(name: str) -> str:
    return " ".join(name.split()).casefold()


def make_facet(name: str, description: str = "", value_type: str = "text",
               origin: str = ORIGIN_USER) -> Facet:
    return Facet(
        facet_id=stable_id("facet", name),
        name=name.strip(),
        description=description.strip(),
        value_type=value_type,
        origin=origin,
    )


def sample_subsets(collection: Collection, n: int, k: int, seed: int) -> list[list[str]]:
    """Sample ``n`` paper-id subsets of ``min(k, |collection|)`` distinct papers.

    Subsets may overlap with each other; sampling is uniform without
    replacement within a subset and deterministic for a fixed seed.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    ids = list(collection.paper_ids())
    if not ids:
        raise RejectionError("cannot sample subsets from an empty collection")
    size = min(k, len(ids))
    rng = random.Random(seed)
    return [rng.sample(ids, size) for _ in range(n)]


def _induction_context(papers: Sequence[Paper]) -> str:
    parts = []
    for paper in papers:
        lines = [f"Title: {paper.title}"]
        if paper.abstract:
            lines.append(f"Abstract: {paper.abstract}")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def _induction_request(
    papers: Sequence[Paper], max_facets: int, profile: ModelProfile
) -> CompletionRequest:
    return CompletionRequest(
        template_id="facet-induction",
        variables={"context": _induction_context(papers), "max_facets": str(max_facets)},
        model_profile=profile,
    )


def _candidates_from(payload: list, max_facets: int, subset_index: int) -> list[FacetCandidate]:
    if len(payload) > max_facets:
        logger.warning(
            "facet induction returned %d candidates, truncating to %d", len(payload), max_facets
        )
        payload = payload[:max_facets]
    return [
        FacetCandidate(
            name=item["name"].strip(),
            description=item.get("description", "").strip(),
            source_subset_index=subset_index,
        )
        for item in payload
        if item["name"].strip()
    ]


def induce_facets(
    provider: Provider,
    subset_papers: Sequence[Paper],
    max_facets: int,
    *,
    profile: ModelProfile,
    subset_index: int = 0,
) -> list[FacetCandidate]:
    if not subset_papers:
        raise ValueError("subset_papers must be non-empty")
    payload = provider.complete_structured(_induction_request(subset_papers, max_facets, profile))
    return _candidates_from(payload, max_facets, subset_index)


def _merge_input(candidate_sets: Sequence[Sequence[FacetCandidate]]) -> str:
    blocks = []
    for index, candidates in enumerate(candidate_sets, start=1):
        lines = [f"Subset {index}:"]
        for candidate in candidates:
            suffix = f": {candidate.description}" if candidate.description else ""
            lines.append(f"- {candidate.name}{suffix}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def dedupe_facets(facets: Sequence[Facet]) -> list[Facet]:
    """Drop later facets whose normalized name repeats an earlier one."""
    seen: set[str] = set()
    unique: list[Facet] = []
    for facet in facets:
        key = normalized_name(facet.name)
        if key in seen:
            logger.warning("dropping duplicate facet name %r after merge", facet.name)
            continue
        seen.add(key)
        unique.append(facet)
    return unique


def merge_facets(
    provider: Provider,
    candidate_sets: Sequence[Sequence[FacetCandidate]],
    max_facets: int,
    *,
    profile: ModelProfile,
) -> list[Facet]:
    """Consolidate per-subset candidates into at most ``max_facets`` typed facets."""
    if not candidate_sets:
        raise ValueError("at least one candidate set is required")
    request = CompletionRequest(
        template_id="facet-merge",
        variables={"facets": _merge_input(candidate_sets), "max_facets": str(max_facets)},
        model_profile=profile,
    )
    payload = provider.complete_structured(request)
    facets = [
        make_facet(
            item["name"],
            item.get("description", ""),
            item.get("type", "text"),
            origin=ORIGIN_SUGGESTED,
        )
        for item in payload
        if item["name"].strip()
    ]
    if not facets:
        # Merge floor: a model that discards everything must not erase progress.
        logger.warning("facet merge returned nothing; falling back to raw candidates")
        facets = [
            make_facet(c.name, c.description, origin=ORIGIN_SUGGESTED)
            for candidates in candidate_sets
            for c in candidates
        ]
    return dedupe_facets(facets)[:max_facets]


def suggest_facets(
    provider: Provider,
    collection: Collection,
    config: FacetDiscoveryConfig = FacetDiscoveryConfig(),
    *,
    profile: ModelProfile,
) -> list[Facet]:
    """Full discovery pipeline: sample subsets, induce per subset, merge.

    Individual subset failures are tolerated as long as at least one subset
    produced candidates; total failure raises.
    """
    if not collection.papers:
        raise RejectionError("cannot suggest facets for an empty collection")
    subsets = sample_subsets(collection, config.n, config.k, config.seed)
    papers_by_id = {p.paper_id: p for p in collection.papers}
    requests = [
        _induction_request([papers_by_id[pid] for pid in subset], config.max_facets, profile)
        for subset in subsets
    ]
    results = provider.fan_out(requests, concurrency_limit=max(1, len(requests)))

    candidate_sets: list[list[FacetCandidate]] = []
    first_failure: Exception | None = None
    for index, result in enumerate(results):
        if isinstance(result, Exception):
            logger.warning("facet induction failed for subset %d: %s", index, result)
            first_failure = first_failure or result
            continue
        candidate_sets.append(_candidates_from(result, config.max_facets, index))
    if not candidate_sets:
        raise ProviderError("facet discovery failed for every sampled subset") from first_failure

    return merge_facets(provider, candidate_sets, config.max_facets, profile=profile)
