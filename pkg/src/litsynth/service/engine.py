"""Orchestrator binding corpus, provider, pipeline modules, and persistence.

One mutation lock per collection serializes writes; reads take consistent
snapshots. Column population runs on a worker thread per column (bounded
fan-out inside), publishing cell progress through the bus.
"""

from __future__ import annotations

import logging
import threading
from datetime import datetime, timezone
from typing import Callable, Mapping, Sequence

from ..attribution import ChunkVectorCache, EvidenceLocation, locate_evidence
from ..config import FAST_EXTRACT_PROFILE, REASONING_PROFILE, Config
from ..corpus.ingest import ingest_collection
from ..corpus.models import Collection
from ..errors import DuplicateFacetError, NotFoundError, RejectionError
from ..facets import (
    Facet,
    FacetDiscoveryConfig,
    make_facet,
    normalized_name,
    suggest_facets,
)
from ..provider.client import ModelProfile, Provider
from ..synthesis import Synthesis, export_markdown, generate_synthesis
from ..table import (
    Cell,
    Column,
    export_table_csv,
    export_table_markdown,
    populate_column,
    table_view,
)
from ..taxonomy import (
    Selection,
    Taxonomy,
    add_category,
    build_taxonomy,
    move_node,
    select,
    taxonomy_wire,
)
from ..util import stable_id
from .events import CELL_EVENT, COLUMN_EVENT, ProgressBus, ProgressEvent, Subscription
from .store import WorkspaceStore

logger = logging.getLogger(__name__)


def utc_clock() -> str:
    return datetime.now(timezone.utc).isoformat()


class _CollectionState:
    def __init__(self, collection: Collection):
        self.collection = collection
        self.columns: dict[str, Column] = {}
        self.cells: dict[tuple[str, str], Cell] = {}
        self.taxonomies: dict[str, Taxonomy] = {}
        self.syntheses: dict[str, Synthesis] = {}
        self.lock = threading.RLock()


class Engine:
    def __init__(
        self,
        store: WorkspaceStore,
        provider: Provider,
        config: Config | None = None,
        *,
        clock: Callable[[], str] | None = None,
    ):
        self.store = store
        self.provider = provider
        self.config = config or Config()
        self.clock = clock or utc_clock
        self.bus = ProgressBus()
        self.vector_cache = ChunkVectorCache(provider, store)
        self._states: dict[str, _CollectionState] = {}
        self._states_lock = threading.Lock()

    # -- profiles ------------------------------------------------------------

    def _profile(self, name: str) -> ModelProfile:
        profiles = self.config.provider.profiles
        if name in profiles:
            return profiles[name]
        raise RejectionError(f"model profile {name!r} is not configured")

    # -- state management ------------------------------------------------------

    def _load_state(self, collection_id: str) -> _CollectionState:
        collection = self.store.load_collection(collection_id)
        state = _CollectionState(collection)
        for column in self.store.load_columns(collection_id):
            state.columns[column.column_id] = column
            for cell in self.store.load_cells(collection_id, column.column_id):
                state.cells[(cell.paper_id, column.column_id)] = cell
        for taxonomy in self.store.load_taxonomies(collection_id):
            state.taxonomies[taxonomy.taxonomy_id] = taxonomy
        for synthesis in self.store.load_syntheses(collection_id):
            state.syntheses[synthesis.synthesis_id] = synthesis
        return state

    def _state(self, collection_id: str) -> _CollectionState:
        with self._states_lock:
            if collection_id not in self._states:
                self._states[collection_id] = self._load_state(collection_id)
            return self._states[collection_id]

    # -- collections -------------------------------------------------------------

    def create_collection(self, manifest: Mapping) -> Collection:
        """Ingest a manifest; creation with a client-supplied id is idempotent."""
        collection = ingest_collection(manifest)
        if self.store.has_collection(collection.collection_id):
            return self._state(collection.collection_id).collection
        self.store.save_collection(collection)
        with self._states_lock:
            self._states[collection.collection_id] = _CollectionState(collection)
        return collection

    def list_collections(self) -> list[Collection]:
        return [self._state(cid).collection for cid in self.store.list_collection_ids()]

    def get_collection(self, collection_id: str) -> Collection:
        return self._state(collection_id).collection

    # -- facet discovery ------------------------------------------------------------

    def suggest_facets(self, collection_id: str) -> list[Facet]:
        state = self._state(collection_id)
        discovery = FacetDiscoveryConfig(
            n=self.config.facets.n,
            k=self.config.facets.k,
            max_facets=self.config.facets.max,
            seed=self.config.facets.seed,
        )
        return suggest_facets(
            self.provider,
            state.collection,
            discovery,
            profile=self._profile(REASONING_PROFILE),
        )

    # -- review table -------------------------------------------------------------

    def _emit(self, event: ProgressEvent, cell: Cell | None = None) -> None:
        with self.bus.lock:
            if cell is not None:
                state = self._state(event.collection_id)
                state.cells[(cell.paper_id, cell.column_id)] = cell
            self.bus.publish(event)

    def add_column(
        self,
        collection_id: str,
        name: str,
        description: str = "",
        value_type: str = "text",
        origin: str = "user",
        *,
        wait: bool = True,
    ) -> Column:
        """Create a column and populate its cells; uniqueness is case-insensitive."""
        state = self._state(collection_id)
        with state.lock:
            wanted = normalized_name(name)
            for existing in state.columns.values():
                if normalized_name(existing.facet.name) == wanted:
                    raise DuplicateFacetError(
                        f"facet named {name!r} already exists in collection {collection_id!r}"
                    )
            facet = make_facet(name, description, value_type, origin=origin)
            column = Column(
                column_id=stable_id("col", facet.name, collection_id),
                facet=facet,
                status="pending",
                created_at=self.clock(),
                creation_index=len(state.columns),
            )
            state.columns[column.column_id] = column
            self.store.save_column(collection_id, column)
            for paper in state.collection.papers:
                cell = Cell(paper.paper_id, column.column_id)
                self._emit(
                    ProgressEvent(
                        collection_id=collection_id,
                        column_id=column.column_id,
                        paper_id=paper.paper_id,
                        status=cell.status,
                        timestamp=self.clock(),
                    ),
                    cell,
                )

        if wait:
            self._populate(collection_id, column, resume=False)
        else:
            thread = threading.Thread(
                target=self._populate,
                args=(collection_id, column),
                kwargs={"resume": False},
                daemon=True,
                name=f"populate-{column.column_id}",
            )
            thread.start()
        return column

    def _populate(self, collection_id: str, column: Column, *, resume: bool) -> None:
        state = self._state(collection_id)

        def emit(cell: Cell) -> None:
            self._emit(
                ProgressEvent(
                    collection_id=collection_id,
                    column_id=column.column_id,
                    paper_id=cell.paper_id,
                    status=cell.status,
                    timestamp=self.clock(),
                ),
                cell,
            )

        try:
            result = populate_column(
                state.collection,
                column,
                self.provider,
                self.store,
                profile=self._profile(FAST_EXTRACT_PROFILE),
                context_budget=self.config.extraction.context_budget,
                concurrency_limit=self.config.concurrency.limit,
                emit=emit,
                resume=resume,
            )
        except Exception:
            logger.exception("column population crashed for %s", column.column_id)
            raise
        with self.bus.lock:
            for cell in result.cells:
                state.cells[(cell.paper_id, cell.column_id)] = cell
            self.bus.publish(
                ProgressEvent(
                    collection_id=collection_id,
                    column_id=column.column_id,
                    paper_id=None,
                    status=column.status,
                    timestamp=self.clock(),
                    kind=COLUMN_EVENT,
                )
            )

    def resume_interrupted(self, collection_id: str) -> list[str]:
        """Resume any column left mid-population by a previous process."""
        state = self._state(collection_id)
        resumed = []
        for column in list(state.columns.values()):
            if column.status == "populating":
                logger.info("resuming interrupted column %s", column.column_id)
                self._populate(collection_id, column, resume=True)
                resumed.append(column.column_id)
        return resumed

    def get_table(self, collection_id: str) -> dict:
        state = self._state(collection_id)
        with state.lock, self.bus.lock:
            return table_view(
                state.collection, list(state.columns.values()), dict(state.cells)
            )

    def export_table(self, collection_id: str, fmt: str = "markdown") -> str:
        view = self.get_table(collection_id)
        if fmt == "csv":
            return export_table_csv(view)
        if fmt == "markdown":
            return export_table_markdown(view)
        raise RejectionError(f"unknown table export format {fmt!r}")

    def get_column(self, collection_id: str, column_id: str) -> Column:
        state = self._state(collection_id)
        try:
            return state.columns[column_id]
        except KeyError:
            raise NotFoundError(f"column {column_id!r} not found") from None

    # -- attribution ----------------------------------------------------------------

    def get_evidence(self, collection_id: str, paper_id: str, snippet: str) -> dict:
        state = self._state(collection_id)
        paper = state.collection.paper(paper_id)
        location: EvidenceLocation = locate_evidence(
            self.provider, snippet, paper, cache=self.vector_cache
        )
        chunk = paper.chunks[location.chunk_index]
        payload = location.to_dict()
        payload["chunk_text"] = chunk.text
        return payload

    # -- taxonomies --------------------------------------------------------------------

    def build_taxonomy(self, collection_id: str, column_id: str) -> Taxonomy:
        """Build (or explicitly rebuild) the taxonomy over a column's snippets."""
        state = self._state(collection_id)
        with state.lock:
            column = self.get_column(collection_id, column_id)
            snippets = []
            for paper in state.collection.papers:
                cell = state.cells.get((paper.paper_id, column_id))
                if cell is not None and cell.snippet:
                    snippets.append((paper.paper_id, cell.snippet))
            if not snippets:
                raise RejectionError(
                    f"column {column_id!r} has no snippets to organize yet"
                )
            taxonomy = build_taxonomy(
                self.provider,
                column.facet,
                snippets,
                profile=self._profile(REASONING_PROFILE),
                max_roots=self.config.taxonomy.max_roots,
                taxonomy_id=stable_id("tax", column_id),
            )
            state.taxonomies[taxonomy.taxonomy_id] = taxonomy
            self.store.save_taxonomy(collection_id, taxonomy)
            return taxonomy

    def get_taxonomy(self, collection_id: str, taxonomy_id: str) -> Taxonomy:
        state = self._state(collection_id)
        try:
            return state.taxonomies[taxonomy_id]
        except KeyError:
            raise NotFoundError(f"taxonomy {taxonomy_id!r} not found") from None

    def move_node(
        self,
        collection_id: str,
        taxonomy_id: str,
        node_id: str,
        new_parent_id: str | None,
        expected_version: int,
    ) -> Taxonomy:
        state = self._state(collection_id)
        with state.lock:
            taxonomy = self.get_taxonomy(collection_id, taxonomy_id)
            move_node(taxonomy, node_id, new_parent_id, expected_version=expected_version)
            self.store.save_taxonomy(collection_id, taxonomy)
            return taxonomy

    def add_category(
        self,
        collection_id: str,
        taxonomy_id: str,
        parent_id: str | None,
        label: str,
        expected_version: int,
    ) -> Taxonomy:
        state = self._state(collection_id)
        with state.lock:
            taxonomy = self.get_taxonomy(collection_id, taxonomy_id)
            add_category(taxonomy, parent_id, label, expected_version=expected_version)
            self.store.save_taxonomy(collection_id, taxonomy)
            return taxonomy

    def select(
        self, collection_id: str, taxonomy_id: str, node_ids: Sequence[str], version: int
    ) -> dict:
        taxonomy = self.get_taxonomy(collection_id, taxonomy_id)
        selection = Selection(
            taxonomy_id=taxonomy_id, node_ids=tuple(node_ids), version=version
        )
        members = sorted(select(taxonomy, selection))
        return {
            "members": [[paper_id, index] for paper_id, index in members],
            "paper_ids": sorted({paper_id for paper_id, _ in members}),
        }

    # -- synthesis ------------------------------------------------------------------------

    def generate_synthesis(
        self,
        collection_id: str,
        taxonomy_id: str,
        node_ids: Sequence[str],
        version: int,
        starred: Sequence[str] = (),
        length_constraint: str | None = None,
    ) -> Synthesis:
        state = self._state(collection_id)
        taxonomy = self.get_taxonomy(collection_id, taxonomy_id)
        column = next(
            (c for c in state.columns.values() if c.facet.facet_id == taxonomy.facet_id), None
        )
        if column is None:
            raise NotFoundError(f"no column backs taxonomy {taxonomy_id!r}")
        selection = Selection(
            taxonomy_id=taxonomy_id, node_ids=tuple(node_ids), version=version
        )
        synthesis = generate_synthesis(
            self.provider,
            taxonomy,
            selection,
            column.facet,
            profile=self._profile(REASONING_PROFILE),
            known_paper_ids=state.collection.paper_ids(),
            starred_paper_ids=tuple(starred),
            length_constraint=length_constraint or self.config.synthesis.length_constraint,
        )
        with state.lock:
            state.syntheses[synthesis.synthesis_id] = synthesis
            self.store.save_synthesis(collection_id, synthesis)
        return synthesis

    def get_synthesis(self, collection_id: str, synthesis_id: str) -> Synthesis:
        state = self._state(collection_id)
        try:
            return state.syntheses[synthesis_id]
        except KeyError:
            raise NotFoundError(f"synthesis {synthesis_id!r} not found") from None

    def export_synthesis(self, collection_id: str, synthesis_id: str) -> str:
        state = self._state(collection_id)
        synthesis = self.get_synthesis(collection_id, synthesis_id)
        taxonomy = state.taxonomies.get(synthesis.taxonomy_id)
        facet_name = "Synthesis"
        if taxonomy is not None:
            for column in state.columns.values():
                if column.facet.facet_id == taxonomy.facet_id:
                    facet_name = column.facet.name
                    break
        return export_markdown(synthesis, state.collection, facet_name)

    def find_synthesis(self, synthesis_id: str) -> tuple[str, Synthesis]:
        for collection_id in self.store.list_collection_ids():
            state = self._state(collection_id)
            if synthesis_id in state.syntheses:
                return collection_id, state.syntheses[synthesis_id]
        raise NotFoundError(f"synthesis {synthesis_id!r} not found in any collection")

    # -- progress events --------------------------------------------------------------------

    def subscribe(self, collection_id: str) -> tuple[list[ProgressEvent], Subscription]:
        """Connect a subscriber: a snapshot of current cell statuses, then deltas."""
        state = self._state(collection_id)
        with self.bus.lock:
            subscription = self.bus.subscribe(collection_id)
            snapshot = []
            for column in sorted(state.columns.values(), key=lambda c: c.creation_index):
                for paper in state.collection.papers:
                    cell = state.cells.get((paper.paper_id, column.column_id))
                    if cell is None:
                        continue
                    snapshot.append(
                        ProgressEvent(
                            collection_id=collection_id,
                            column_id=column.column_id,
                            paper_id=paper.paper_id,
                            status=cell.status,
                            timestamp=self.clock(),
                            kind=CELL_EVENT,
                        )
                    )
        return snapshot, subscription

    def taxonomy_wire(self, taxonomy: Taxonomy) -> dict:
        return taxonomy_wire(taxonomy)
