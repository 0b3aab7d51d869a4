"""Branch-steered narrative synthesis with inline, parseable citations.

Citation markers follow the ``[[paperId]]`` / ``[[id1, id2]]`` grammar.
Generated blocks must mirror the distinct top-level ancestors of the
selected taxonomy nodes, and every selected paper must be cited; defects are
validated mechanically and surfaced in a report rather than silently
retried away (one automatic re-prompt, then the result stands as-is).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .corpus.models import Collection
from .errors import PreconditionError
from .facets import Facet
from .provider.client import CompletionRequest, ModelProfile, Provider
from .taxonomy import (
    CATEGORY,
    Selection,
    Taxonomy,
    TaxonomyNode,
    member_indices,
    select,
)
from .util import stable_hash

logger = logging.getLogger(__name__)

MARKER_RE = re.compile(r"\[\[([^\[\]]*?)\]\]")


@dataclass(frozen=True)
class CitationSpan:
    start: int
    end: int
    paper_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "paper_ids": list(self.paper_ids)}


@dataclass(frozen=True)
class SummaryBlock:
    header: str
    content: str

    def to_dict(self) -> dict:
        return {"header": self.header, "content": self.content}


@dataclass(frozen=True)
class ValidationReport:
    uncited: tuple[str, ...] = ()
    unknown: tuple[str, ...] = ()
    header_mismatches: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def clean(self) -> bool:
        return not (self.uncited or self.unknown or self.header_mismatches or self.warnings)

    def to_dict(self) -> dict:
        return {
            "uncited": list(self.uncited),
            "unknown": list(self.unknown),
            "header_mismatches": list(self.header_mismatches),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValidationReport":
        return cls(
            uncited=tuple(data.get("uncited") or ()),
            unknown=tuple(data.get("unknown") or ()),
            header_mismatches=tuple(data.get("header_mismatches") or ()),
            warnings=tuple(data.get("warnings") or ()),
        )


@dataclass
class Synthesis:
    synthesis_id: str
    taxonomy_id: str
    taxonomy_version: int
    selected_node_ids: tuple[str, ...]
    starred_paper_ids: tuple[str, ...]
    blocks: list[SummaryBlock] = field(default_factory=list)
    validation_report: ValidationReport = field(default_factory=ValidationReport)

    def to_dict(self) -> dict:
        return {
            "synthesis_id": self.synthesis_id,
            "taxonomy_id": self.taxonomy_id,
            "taxonomy_version": self.taxonomy_version,
            "selected_node_ids": list(self.selected_node_ids),
            "starred_paper_ids": list(self.starred_paper_ids),
            "blocks": [block.to_dict() for block in self.blocks],
            "validation_report": self.validation_report.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Synthesis":
        return cls(
            synthesis_id=data["synthesis_id"],
            taxonomy_id=data["taxonomy_id"],
            taxonomy_version=data["taxonomy_version"],
            selected_node_ids=tuple(data.get("selected_node_ids") or ()),
            starred_paper_ids=tuple(data.get("starred_paper_ids") or ()),
            blocks=[SummaryBlock(**b) for b in data.get("blocks") or ()],
            validation_report=ValidationReport.from_dict(data.get("validation_report") or {}),
        )


def parse_citations(content: str) -> list[CitationSpan]:
    """Every well-formed ``[[...]]`` marker becomes one span; malformed ones do not."""
    spans = []
    for match in MARKER_RE.finditer(content):
        ids = [part.strip() for part in match.group(1).split(",")]
        if any(not part for part in ids):
            continue
        spans.append(CitationSpan(start=match.start(), end=match.end(), paper_ids=tuple(ids)))
    return spans


def citation_warnings(content: str) -> list[str]:
    """Malformed markers (unbalanced brackets, empty ids) as warning strings."""
    warnings = []
    masked = list(content)
    for match in MARKER_RE.finditer(content):
        ids = [part.strip() for part in match.group(1).split(",")]
        if any(not part for part in ids):
            warnings.append(
                f"malformed citation marker {match.group(0)!r} at offset {match.start()}"
            )
        for position in range(match.start(), match.end()):
            masked[position] = " "
    leftover = "".join(masked)
    for token in ("[[", "]]"):
        offset = leftover.find(token)
        while offset != -1:
            warnings.append(f"unbalanced citation bracket {token!r} at offset {offset}")
            offset = leftover.find(token, offset + 2)
    return sorted(warnings)


def render_marker(paper_ids: Sequence[str]) -> str:
    """Inverse of parsing for a single span: ids back to marker text."""
    return "[[" + ", ".join(paper_ids) + "]]"


def substitute_markers(content: str, replacement: Callable[[CitationSpan], str]) -> str:
    """Replace each well-formed marker via ``replacement``; everything else stays put."""
    result = content
    for span in reversed(parse_citations(content)):
        result = result[: span.start] + replacement(span) + result[span.end :]
    return result


def selected_top_level(taxonomy: Taxonomy, node_ids: Iterable[str]) -> list[TaxonomyNode]:
    """Distinct roots that contain at least one selected node, in root order."""
    wanted = set(node_ids)

    def contains_any(node: TaxonomyNode) -> bool:
        if node.node_id in wanted:
            return True
        return any(contains_any(child) for child in node.children)

    return [root for root in taxonomy.roots if contains_any(root)]


def _drop_nested_selections(taxonomy: Taxonomy, node_ids: Sequence[str]) -> list[str]:
    """Remove node ids whose ancestor is also selected (their content is implied)."""
    wanted = set(node_ids)

    def covered(node: TaxonomyNode, inherited: bool, acc: list[str]) -> None:
        selected_here = node.node_id in wanted
        if selected_here and not inherited:
            acc.append(node.node_id)
        for child in node.children:
            covered(child, inherited or selected_here, acc)

    kept: list[str] = []
    for root in taxonomy.roots:
        covered(root, False, kept)
    return kept


def render_excerpts(taxonomy: Taxonomy, node_ids: Sequence[str]) -> str:
    """Selected branches as an outline with per-snippet paper ids."""
    effective = set(_drop_nested_selections(taxonomy, node_ids))
    lines: list[str] = []

    def emit(node: TaxonomyNode, indent: int) -> None:
        pad = "  " * indent
        if node.kind == CATEGORY:
            lines.append(f"{pad}Category: {node.label}")
            for child in node.children:
                emit(child, indent + 1)
        else:
            lines.append(f"{pad}Category: {node.label}")
            for index in node.members:
                paper_id, snippet = taxonomy.snippet_table[index]
                lines.append(f"{pad}- paperId: {paper_id} | {snippet}")

    def walk(node: TaxonomyNode, indent: int) -> None:
        if node.node_id in effective:
            emit(node, indent)
            return
        if node.kind == CATEGORY:
            selected_below = [c for c in node.children if _has_selected(c, effective)]
            if selected_below:
                lines.append(f"{'  ' * indent}Category: {node.label}")
                for child in selected_below:
                    walk(child, indent + 1)

    for root in selected_top_level(taxonomy, node_ids):
        lines.append(f"Top-level category: {root.label}")
        walk(root, 1)
        lines.append("")
    return "\n".join(lines).rstrip("\n")


def _has_selected(node: TaxonomyNode, wanted: set[str]) -> bool:
    if node.node_id in wanted:
        return True
    return any(_has_selected(child, wanted) for child in node.children)


def validate_synthesis(
    synthesis: Synthesis,
    taxonomy: Taxonomy,
    selection: Selection,
    known_paper_ids: Iterable[str],
) -> ValidationReport:
    """Mechanical checks: citation coverage, id existence, header structure."""
    selected_papers = {paper_id for paper_id, _ in select(taxonomy, selection)}
    known = set(known_paper_ids)

    cited: set[str] = set()
    warnings: list[str] = []
    for block in synthesis.blocks:
        for span in parse_citations(block.content):
            cited.update(span.paper_ids)
        warnings.extend(citation_warnings(block.content))

    expected_headers = [root.label for root in selected_top_level(taxonomy, selection.node_ids)]
    actual_headers = [block.header for block in synthesis.blocks]
    mismatches: list[str] = []
    for header in expected_headers:
        if header not in actual_headers:
            mismatches.append(f"missing block for top-level category {header!r}")
    for header in actual_headers:
        if header not in expected_headers:
            mismatches.append(f"unexpected block header {header!r}")
    if not mismatches and actual_headers != expected_headers:
        mismatches.append(
            f"block order {actual_headers!r} does not match category order {expected_headers!r}"
        )

    return ValidationReport(
        uncited=tuple(sorted(selected_papers - cited)),
        unknown=tuple(sorted(cited - known)),
        header_mismatches=tuple(mismatches),
        warnings=tuple(sorted(warnings)),
    )


def generate_synthesis(
    provider: Provider,
    taxonomy: Taxonomy,
    selection: Selection,
    facet: Facet,
    *,
    profile: ModelProfile,
    known_paper_ids: Iterable[str],
    starred_paper_ids: Sequence[str] = (),
    length_constraint: str = "between 300 and 500 words",
) -> Synthesis:
    """Generate a block-structured synthesis steered by the selected branches.

    One automatic re-prompt when headers mismatch or coverage fails, then
    the result is returned with its validation report regardless, so the
    caller always sees remaining defects.
    """
    if not selection.node_ids:
        raise PreconditionError("selection must include at least one taxonomy node")
    members = select(taxonomy, selection)
    selected_papers = {paper_id for paper_id, _ in members}
    outside = sorted(set(starred_paper_ids) - selected_papers)
    if outside:
        raise PreconditionError(
            f"starred paper(s) outside the selected branches: {', '.join(outside)}"
        )

    name_and_description = (
        f"{facet.name}: {facet.description}" if facet.description else facet.name
    )
    variables = {
        "facet_name_and_description": name_and_description,
        "excerpts": render_excerpts(taxonomy, list(selection.node_ids)),
        "starred_papers": ", ".join(starred_paper_ids) if starred_paper_ids else "None",
        "length_constraint": length_constraint,
    }
    synthesis_id = "syn-" + stable_hash(
        taxonomy.taxonomy_id,
        str(taxonomy.version),
        ",".join(selection.node_ids),
        ",".join(starred_paper_ids),
        length_constraint,
    )[:10]

    request = CompletionRequest(
        template_id="summarization",
        variables=variables,
        model_profile=profile,
    )
    synthesis: Synthesis | None = None
    report: ValidationReport | None = None
    for attempt in range(2):
        payload = provider.complete_structured(request)
        blocks = [
            SummaryBlock(header=item["header"], content=item["content"])
            for item in payload["summary_blocks"]
        ]
        synthesis = Synthesis(
            synthesis_id=synthesis_id,
            taxonomy_id=taxonomy.taxonomy_id,
            taxonomy_version=taxonomy.version,
            selected_node_ids=tuple(selection.node_ids),
            starred_paper_ids=tuple(starred_paper_ids),
            blocks=blocks,
        )
        report = validate_synthesis(synthesis, taxonomy, selection, known_paper_ids)
        if attempt == 0 and (report.uncited or report.header_mismatches):
            defects = list(report.header_mismatches)
            defects.extend(f"paper {paper_id} is never cited" for paper_id in report.uncited)
            logger.info("re-prompting synthesis once: %s", "; ".join(defects))
            request = replace(
                request,
                repair_context=(
                    "Your previous summary had these defects:\n"
                    + "\n".join(f"- {d}" for d in defects)
                    + "\nRegenerate the summary fixing every defect."
                ),
            )
            continue
        break
    synthesis.validation_report = report
    return synthesis


def export_markdown(synthesis: Synthesis, collection: Collection, title: str) -> str:
    """Deterministic markdown export: numbered references in first-citation order."""
    numbering: dict[str, int] = {}
    for block in synthesis.blocks:
        for span in parse_citations(block.content):
            for paper_id in span.paper_ids:
                if paper_id not in numbering:
                    numbering[paper_id] = len(numbering) + 1

    lines = [f"# {title}", ""]
    report = synthesis.validation_report
    if not report.clean:
        defects = []
        if report.uncited:
            defects.append(f"uncited papers: {', '.join(report.uncited)}")
        if report.unknown:
            defects.append(f"unknown cited ids: {', '.join(report.unknown)}")
        defects.extend(report.header_mismatches)
        defects.extend(report.warnings)
        for defect in defects:
            lines.append(f"<!-- validation: {defect} -->")
        lines.append("")

    def bracketed(span: CitationSpan) -> str:
        return "[" + ", ".join(str(numbering[p]) for p in span.paper_ids) + "]"

    for block in synthesis.blocks:
        lines.append(f"## {block.header}")
        lines.append("")
        lines.append(substitute_markers(block.content, bracketed))
        lines.append("")

    if numbering:
        lines.append("## References")
        lines.append("")
        papers_by_id = {paper.paper_id: paper for paper in collection.papers}
        for paper_id, number in sorted(numbering.items(), key=lambda item: item[1]):
            paper = papers_by_id.get(paper_id)
            if paper is None:
                lines.append(f"{number}. Unknown paper ({paper_id}).")
                continue
            segments = [paper.title]
            if paper.authors:
                segments.append(", ".join(paper.authors))
            venue_year = ", ".join(
                str(part) for part in (paper.venue, paper.year) if part is not None
            )
            if venue_year:
                segments.append(venue_year)
            lines.append(f"{number}. " + ". ".join(segments) + ".")
        lines.append("")
    return "\n".join(lines)
