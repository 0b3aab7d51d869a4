"""On-disk workspace: human-inspectable JSON files per collection.

Every write is atomic (write-temp-then-rename in the destination
directory), so a crash mid-population never leaves a torn file; restarting
sees the last fully written state. Layout::

    <root>/
      schema_version
      collections/<collection>/
        collection.json
        columns/<column>/column.json
        columns/<column>/summaries/<paper>.json   # staging, cleared on settle
        columns/<column>/cells/<paper>.json
        taxonomies/<taxonomy>.json
        syntheses/<synthesis>.json
        vectors/<model>/<paper>.json
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from ..corpus.models import Collection
from ..errors import NotFoundError
from ..synthesis import Synthesis
from ..table import Cell, Column
from ..taxonomy import Taxonomy
from ..util import fs_slug

SCHEMA_VERSION = 1


def atomic_write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, ensure_ascii=False, indent=2)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


class WorkspaceStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        version_file = self.root / "schema_version"
        if not version_file.exists():
            version_file.write_text(str(SCHEMA_VERSION), encoding="utf-8")

    # -- paths -------------------------------------------------------------

    def collection_dir(self, collection_id: str) -> Path:
        return self.root / "collections" / fs_slug(collection_id)

    def _column_dir(self, collection_id: str, column_id: str) -> Path:
        return self.collection_dir(collection_id) / "columns" / fs_slug(column_id)

    # -- collections --------------------------------------------------------

    def save_collection(self, collection: Collection) -> None:
        atomic_write_json(
            self.collection_dir(collection.collection_id) / "collection.json",
            collection.to_dict(),
        )

    def load_collection(self, collection_id: str) -> Collection:
        path = self.collection_dir(collection_id) / "collection.json"
        if not path.exists():
            raise NotFoundError(f"collection {collection_id!r} not found")
        return Collection.from_dict(read_json(path))

    def list_collection_ids(self) -> list[str]:
        base = self.root / "collections"
        if not base.exists():
            return []
        ids = []
        for entry in sorted(base.iterdir()):
            path = entry / "collection.json"
            if path.exists():
                ids.append(read_json(path)["collection_id"])
        return ids

    def has_collection(self, collection_id: str) -> bool:
        return (self.collection_dir(collection_id) / "collection.json").exists()

    # -- columns and cells ---------------------------------------------------

    def save_column(self, collection_id: str, column: Column) -> None:
        atomic_write_json(
            self._column_dir(collection_id, column.column_id) / "column.json",
            column.to_dict(),
        )

    def load_columns(self, collection_id: str) -> list[Column]:
        base = self.collection_dir(collection_id) / "columns"
        if not base.exists():
            return []
        columns = []
        for entry in sorted(base.iterdir()):
            path = entry / "column.json"
            if path.exists():
                columns.append(Column.from_dict(read_json(path)))
        columns.sort(key=lambda c: c.creation_index)
        return columns

    def save_cell(self, collection_id: str, cell: Cell) -> None:
        cells_dir = self._column_dir(collection_id, cell.column_id) / "cells"
        atomic_write_json(cells_dir / f"{fs_slug(cell.paper_id)}.json", cell.to_dict())

    def load_cells(self, collection_id: str, column_id: str) -> list[Cell]:
        cells_dir = self._column_dir(collection_id, column_id) / "cells"
        if not cells_dir.exists():
            return []
        return [Cell.from_dict(read_json(path)) for path in sorted(cells_dir.glob("*.json"))]

    # -- extraction staging ----------------------------------------------------

    def save_summary(
        self, collection_id: str, column_id: str, paper_id: str, summary: str | None
    ) -> None:
        staging = self._column_dir(collection_id, column_id) / "summaries"
        atomic_write_json(
            staging / f"{fs_slug(paper_id)}.json",
            {"paper_id": paper_id, "summary": summary},
        )

    def load_summaries(self, collection_id: str, column_id: str) -> dict[str, str | None]:
        staging = self._column_dir(collection_id, column_id) / "summaries"
        if not staging.exists():
            return {}
        summaries = {}
        for path in sorted(staging.glob("*.json")):
            record = read_json(path)
            summaries[record["paper_id"]] = record["summary"]
        return summaries

    def clear_summaries(self, collection_id: str, column_id: str) -> None:
        staging = self._column_dir(collection_id, column_id) / "summaries"
        if staging.exists():
            for path in staging.glob("*.json"):
                path.unlink()
            staging.rmdir()

    # -- taxonomies and syntheses ------------------------------------------------

    def save_taxonomy(self, collection_id: str, taxonomy: Taxonomy) -> None:
        atomic_write_json(
            self.collection_dir(collection_id)
            / "taxonomies"
            / f"{fs_slug(taxonomy.taxonomy_id)}.json",
            taxonomy.to_dict(),
        )

    def load_taxonomies(self, collection_id: str) -> list[Taxonomy]:
        base = self.collection_dir(collection_id) / "taxonomies"
        if not base.exists():
            return []
        return [Taxonomy.from_dict(read_json(path)) for path in sorted(base.glob("*.json"))]

    def save_synthesis(self, collection_id: str, synthesis: Synthesis) -> None:
        atomic_write_json(
            self.collection_dir(collection_id)
            / "syntheses"
            / f"{fs_slug(synthesis.synthesis_id)}.json",
            synthesis.to_dict(),
        )

    def load_syntheses(self, collection_id: str) -> list[Synthesis]:
        base = self.collection_dir(collection_id) / "syntheses"
        if not base.exists():
            return []
        return [Synthesis.from_dict(read_json(path)) for path in sorted(base.glob("*.json"))]

    # -- embedding vectors ---------------------------------------------------------

    def save_vectors(self, paper_id: str, model: str, vectors: list[list[float]]) -> None:
        path = self.root / "vectors" / fs_slug(model) / f"{fs_slug(paper_id)}.json"
        atomic_write_json(path, {"paper_id": paper_id, "model": model, "vectors": vectors})

    def load_vectors(self, paper_id: str, model: str) -> list[list[float]] | None:
        path = self.root / "vectors" / fs_slug(model) / f"{fs_slug(paper_id)}.json"
        if not path.exists():
            return None
        return read_json(path)["vectors"]
