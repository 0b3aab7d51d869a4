"""Per-facet hierarchical taxonomies over evidence snippets.

The model returns a nested object whose keys are categories and whose
terminal values are arrays of 0-based snippet indices. That raw form is
validated structurally (depth, coverage, root cap, terminal shape, reserved
keys) before being parsed into node objects; repeated validation failures
degrade to a single-root fallback so the caller is never blocked.

Mutations (drag-and-drop moves, manual categories) are guarded by optimistic
versioning and revalidated invariants: the snippet-occurrence multiset is
conserved, the depth bound holds, and roots stay sorted by paper count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import MutationError, NotFoundError, StructuredOutputError, VersionConflictError
from .facets import Facet
from .provider.client import CompletionRequest, ModelProfile, Provider
from .util import stable_id

logger = logging.getLogger(__name__)

MAX_DEPTH = 5
DEFAULT_MAX_ROOTS = 10
RESERVED_KEYS = frozenset({"indices", "description", "items"})

CATEGORY = "category"
LEAF_GROUP = "leaf-group"

DEGRADED_ROOT_LABEL = "All papers"


@dataclass
class TaxonomyNode:
    node_id: str
    label: str
    kind: str
    children: list["TaxonomyNode"] = field(default_factory=list)
    members: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = {"node_id": self.node_id, "label": self.label, "kind": self.kind}
        if self.kind == CATEGORY:
            data["children"] = [child.to_dict() for child in self.children]
        else:
            data["members"] = list(self.members)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TaxonomyNode":
        return cls(
            node_id=data["node_id"],
            label=data["label"],
            kind=data["kind"],
            children=[cls.from_dict(c) for c in data.get("children") or ()],
            members=list(data.get("members") or ()),
        )


@dataclass
class Taxonomy:
    taxonomy_id: str
    facet_id: str
    roots: list[TaxonomyNode]
    snippet_table: dict[int, tuple[str, str]]
    version: int = 1
    degraded: bool = False
    max_roots: int = DEFAULT_MAX_ROOTS
    next_node_seq: int = 0

    def to_dict(self) -> dict:
        return {
            "taxonomy_id": self.taxonomy_id,
            "facet_id": self.facet_id,
            "roots": [root.to_dict() for root in self.roots],
            "snippet_table": {
                str(index): {"paper_id": ref[0], "snippet": ref[1]}
                for index, ref in sorted(self.snippet_table.items())
            },
            "version": self.version,
            "degraded": self.degraded,
            "max_roots": self.max_roots,
            "next_node_seq": self.next_node_seq,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Taxonomy":
        return cls(
            taxonomy_id=data["taxonomy_id"],
            facet_id=data["facet_id"],
            roots=[TaxonomyNode.from_dict(r) for r in data.get("roots") or ()],
            snippet_table={
                int(index): (ref["paper_id"], ref["snippet"])
                for index, ref in (data.get("snippet_table") or {}).items()
            },
            version=data.get("version", 1),
            degraded=bool(data.get("degraded")),
            max_roots=data.get("max_roots", DEFAULT_MAX_ROOTS),
            next_node_seq=data.get("next_node_seq", 0),
        )


@dataclass(frozen=True)
class Selection:
    taxonomy_id: str
    node_ids: tuple[str, ...]
    version: int


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def validate_taxonomy(raw, snippet_count: int, max_n_categories: int) -> list[Violation]:
    """Structural validation of the raw nested-object form; violations are data."""
    violations: list[Violation] = []
    if not isinstance(raw, dict):
        return [Violation("non-object", "taxonomy must be a JSON object")]
    if len(raw) > max_n_categories:
        violations.append(
            Violation(
                "too-many-roots",
                f"{len(raw)} top-level categories exceed the maximum of {max_n_categories}",
            )
        )
    seen: set[int] = set()

    def walk(obj: dict, depth: int, path: str) -> None:
        for key, value in obj.items():
            here = f"{path} > {key}" if path else str(key)
            if key in RESERVED_KEYS:
                violations.append(
                    Violation("extra-key", f"forbidden key {key!r} at {here!r}")
                )
                continue
            if isinstance(value, dict):
                if not value:
                    violations.append(
                        Violation("empty-category", f"category {here!r} has no contents")
                    )
                walk(value, depth + 1, here)
            elif isinstance(value, list):
                if depth > MAX_DEPTH:
                    violations.append(
                        Violation(
                            "depth-exceeded",
                            f"leaf group {here!r} sits at depth {depth}, deeper than {MAX_DEPTH}",
                        )
                    )
                if not value:
                    violations.append(
                        Violation("empty-leaf-group", f"leaf group {here!r} is empty")
                    )
                for item in value:
                    if isinstance(item, bool) or not isinstance(item, int):
                        violations.append(
                            Violation(
                                "invalid-index",
                                f"leaf group {here!r} holds non-integer index {item!r}",
                            )
                        )
                    elif not 0 <= item < snippet_count:
                        violations.append(
                            Violation(
                                "out-of-range-index",
                                f"index {item} in {here!r} is outside 0..{snippet_count - 1}",
                            )
                        )
                    else:
                        seen.add(item)
            else:
                violations.append(
                    Violation(
                        "non-array-terminal",
                        f"value at {here!r} must be a subcategory object or an index array",
                    )
                )

    walk(raw, 1, "")
    for index in sorted(set(range(snippet_count)) - seen):
        violations.append(Violation("missing-index", f"snippet index {index} is not covered"))
    return violations


def parse_taxonomy(
    raw: dict,
    snippet_table: dict[int, tuple[str, str]],
    *,
    taxonomy_id: str,
    facet_id: str,
    max_roots: int = DEFAULT_MAX_ROOTS,
) -> Taxonomy:
    """Turn a validated raw form into node objects with stable DFS-order ids."""
    counter = iter(range(10**9))

    def build(label: str, value) -> TaxonomyNode:
        node_id = f"n{next(counter)}"
        if isinstance(value, dict):
            return TaxonomyNode(
                node_id=node_id,
                label=label,
                kind=CATEGORY,
                children=[build(k, v) for k, v in value.items()],
            )
        return TaxonomyNode(node_id=node_id, label=label, kind=LEAF_GROUP, members=list(value))

    roots = [build(key, value) for key, value in raw.items()]
    taxonomy = Taxonomy(
        taxonomy_id=taxonomy_id,
        facet_id=facet_id,
        roots=roots,
        snippet_table=dict(snippet_table),
        max_roots=max_roots,
    )
    taxonomy.next_node_seq = sum(1 for _ in iter_nodes(taxonomy))
    sort_roots(taxonomy)
    return taxonomy


def build_taxonomy(
    provider: Provider,
    facet: Facet,
    snippets: Sequence[tuple[str, str]],
    *,
    profile: ModelProfile,
    max_roots: int = DEFAULT_MAX_ROOTS,
    taxonomy_id: str | None = None,
    reprompts: int = 2,
) -> Taxonomy:
    """Cluster snippets into a hierarchy; degrade to a single root on repeated failure.

    ``snippets`` is an indexed list of (paper_id, snippet text) in table row
    order; indices are frozen into the snippet table.
    """
    if not snippets:
        raise ValueError("at least one snippet is required to build a taxonomy")
    snippet_table = {index: (paper_id, text) for index, (paper_id, text) in enumerate(snippets)}
    taxonomy_id = taxonomy_id or stable_id("tax", facet.facet_id)
    name_and_description = (
        f"{facet.name}: {facet.description}" if facet.description else facet.name
    )
    lines = "\n".join(f"{index}: {text}" for index, (_, text) in sorted(snippet_table.items()))
    variables = {
        "facet_name_and_description": name_and_description,
        "max_n_categories": str(max_roots),
        "snippets": lines,
    }

    repair_context = None
    for attempt in range(1 + reprompts):
        request = CompletionRequest(
            template_id="taxonomy-generation",
            variables=variables,
            model_profile=profile,
            max_repair_attempts=0,
            repair_context=repair_context,
        )
        try:
            raw = provider.complete_structured(request)
        except StructuredOutputError as exc:
            violations = list(exc.violations)
        else:
            violations = [str(v) for v in validate_taxonomy(raw, len(snippets), max_roots)]
            if not violations:
                return parse_taxonomy(
                    raw,
                    snippet_table,
                    taxonomy_id=taxonomy_id,
                    facet_id=facet.facet_id,
                    max_roots=max_roots,
                )
        logger.warning(
            "taxonomy for %s failed validation (attempt %d): %s",
            facet.facet_id,
            attempt + 1,
            "; ".join(violations),
        )
        repair_context = (
            "Your previous hierarchy violated the requirements:\n"
            + "\n".join(f"- {v}" for v in violations)
            + "\nReturn a corrected JSON object that satisfies every requirement."
        )

    logger.warning("taxonomy for %s degraded to single-root fallback", facet.facet_id)
    fallback = TaxonomyNode(
        node_id="n0",
        label=DEGRADED_ROOT_LABEL,
        kind=LEAF_GROUP,
        members=sorted(snippet_table),
    )
    return Taxonomy(
        taxonomy_id=taxonomy_id,
        facet_id=facet.facet_id,
        roots=[fallback],
        snippet_table=snippet_table,
        degraded=True,
        max_roots=max_roots,
        next_node_seq=1,
    )


def iter_nodes(taxonomy: Taxonomy) -> Iterator[TaxonomyNode]:
    stack = list(reversed(taxonomy.roots))
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def find_node(taxonomy: Taxonomy, node_id: str) -> tuple[TaxonomyNode, TaxonomyNode | None]:
    """Return (node, parent); parent is None for roots."""

    def search(nodes, parent):
        for node in nodes:
            if node.node_id == node_id:
                return node, parent
            found = search(node.children, node)
            if found is not None:
                return found
        return None

    found = search(taxonomy.roots, None)
    if found is None:
        raise NotFoundError(f"node {node_id!r} not in taxonomy {taxonomy.taxonomy_id!r}")
    return found


def member_indices(node: TaxonomyNode) -> list[int]:
    if node.kind == LEAF_GROUP:
        return list(node.members)
    collected: list[int] = []
    for child in node.children:
        collected.extend(member_indices(child))
    return collected


def paper_count(node: TaxonomyNode, snippet_table: dict[int, tuple[str, str]]) -> int:
    return len({snippet_table[index][0] for index in member_indices(node)})


def leaf_depths(node: TaxonomyNode, base: int) -> list[tuple[TaxonomyNode, int]]:
    """Leaf-groups in the subtree with their absolute depth when node sits at ``base``."""
    if node.kind == LEAF_GROUP:
        return [(node, base)]
    found = []
    for child in node.children:
        found.extend(leaf_depths(child, base + 1))
    return found


def sort_roots(taxonomy: Taxonomy) -> None:
    taxonomy.roots.sort(key=lambda n: -paper_count(n, taxonomy.snippet_table))


def _check_version(taxonomy: Taxonomy, expected_version: int | None) -> None:
    if expected_version is not None and expected_version != taxonomy.version:
        raise VersionConflictError(
            f"taxonomy {taxonomy.taxonomy_id!r} is at version {taxonomy.version}, "
            f"mutation was computed against {expected_version}"
        )


def _node_depth(taxonomy: Taxonomy, target: TaxonomyNode) -> int:
    def search(nodes, depth):
        for node in nodes:
            if node is target:
                return depth
            found = search(node.children, depth + 1)
            if found:
                return found
        return 0

    return search(taxonomy.roots, 1)


def _contains(node: TaxonomyNode, target_id: str) -> bool:
    if node.node_id == target_id:
        return True
    return any(_contains(child, target_id) for child in node.children)


def _ancestor_chain(taxonomy: Taxonomy, node_id: str) -> list[TaxonomyNode]:
    """Ancestors of a node, nearest first; empty for roots."""

    def search(nodes, trail):
        for node in nodes:
            if node.node_id == node_id:
                return list(reversed(trail))
            found = search(node.children, trail + [node])
            if found is not None:
                return found
        return None

    return search(taxonomy.roots, []) or []


def move_node(
    taxonomy: Taxonomy,
    node_id: str,
    new_parent_id: str | None,
    *,
    expected_version: int | None = None,
) -> Taxonomy:
    """Re-parent a node; ``new_parent_id`` of None moves it to the root level.

    The move is rejected if it would create a cycle, push any leaf-group
    past the depth bound, or overflow the root cap. Categories emptied by
    the move are pruned; coverage is conserved because members never change.
    """
    _check_version(taxonomy, expected_version)
    node, parent = find_node(taxonomy, node_id)

    if new_parent_id is None:
        new_parent = None
    else:
        if _contains(node, new_parent_id):
            raise MutationError(
                f"moving {node_id!r} under {new_parent_id!r} would create a cycle"
            )
        new_parent, _ = find_node(taxonomy, new_parent_id)
        if new_parent.kind != CATEGORY:
            raise MutationError(f"target parent {new_parent_id!r} is not a category")

    base_depth = 1 if new_parent is None else _node_depth(taxonomy, new_parent) + 1
    for leaf, depth in leaf_depths(node, base_depth):
        if depth > MAX_DEPTH:
            raise MutationError(
                f"move would place leaf group {leaf.label!r} at depth {depth}, "
                f"deeper than {MAX_DEPTH}"
            )
    if new_parent is None and parent is not None and len(taxonomy.roots) + 1 > taxonomy.max_roots:
        raise MutationError(f"root level is capped at {taxonomy.max_roots} categories")

    old_ancestors = _ancestor_chain(taxonomy, node_id)
    if parent is None:
        taxonomy.roots.remove(node)
    else:
        parent.children.remove(node)

    if new_parent is None:
        taxonomy.roots.append(node)
    else:
        new_parent.children.append(node)

    # Prune only categories this move emptied, nearest first.
    for ancestor in old_ancestors:
        if ancestor.kind == CATEGORY and not ancestor.children:
            _, ancestor_parent = find_node(taxonomy, ancestor.node_id)
            if ancestor_parent is None:
                taxonomy.roots.remove(ancestor)
            else:
                ancestor_parent.children.remove(ancestor)

    sort_roots(taxonomy)
    taxonomy.version += 1
    return taxonomy


def add_category(
    taxonomy: Taxonomy,
    parent_id: str | None,
    label: str,
    *,
    expected_version: int | None = None,
) -> Taxonomy:
    """Add an empty category under a parent (or at the root level)."""
    _check_version(taxonomy, expected_version)
    label = label.strip()
    if not label:
        raise MutationError("category label must be non-empty")
    if parent_id is None:
        if len(taxonomy.roots) + 1 > taxonomy.max_roots:
            raise MutationError(f"root level is capped at {taxonomy.max_roots} categories")
        parent_children = taxonomy.roots
    else:
        parent, _ = find_node(taxonomy, parent_id)
        if parent.kind != CATEGORY:
            raise MutationError(f"cannot add a category under leaf group {parent_id!r}")
        parent_children = parent.children
    node = TaxonomyNode(node_id=f"n{taxonomy.next_node_seq}", label=label, kind=CATEGORY)
    taxonomy.next_node_seq += 1
    parent_children.append(node)
    sort_roots(taxonomy)
    taxonomy.version += 1
    return taxonomy


def select(taxonomy: Taxonomy, selection: Selection) -> set[tuple[str, int]]:
    """Union of (paper_id, snippet_index) members under all selected nodes."""
    if selection.version != taxonomy.version:
        raise VersionConflictError(
            f"selection references taxonomy version {selection.version}, "
            f"current is {taxonomy.version}; refresh and retry"
        )
    members: set[tuple[str, int]] = set()
    for node_id in selection.node_ids:
        node, _ = find_node(taxonomy, node_id)
        for index in member_indices(node):
            members.add((taxonomy.snippet_table[index][0], index))
    return members


def coverage_multiset(taxonomy: Taxonomy) -> dict[int, int]:
    """Occurrence count per snippet index across all leaf-groups."""
    counts: dict[int, int] = {}
    for node in iter_nodes(taxonomy):
        if node.kind == LEAF_GROUP:
            for index in node.members:
                counts[index] = counts.get(index, 0) + 1
    return counts


def taxonomy_wire(taxonomy: Taxonomy) -> dict:
    """Wire form for the UI: persisted fields plus derived paper counts."""

    def annotate(node: TaxonomyNode) -> dict:
        data = node.to_dict()
        data["paper_count"] = paper_count(node, taxonomy.snippet_table)
        if node.kind == CATEGORY:
            data["children"] = [annotate(child) for child in node.children]
        return data

    data = taxonomy.to_dict()
    data["roots"] = [annotate(root) for root in taxonomy.roots]
    return data
