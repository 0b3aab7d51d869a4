import json
import threading

import pytest
from stubs import (
    OVERLONG_SNIPPET,
    SessionScript,
    fixture_manifest,
    hash_embed,
    make_config,
    make_engine,
    session_backend,
)

from litsynth.corpus.ingest import ingest_collection
from litsynth.errors import (
    DuplicateFacetError,
    ProviderTransportError,
    StructuredOutputError,
)
from litsynth.facets import make_facet
from litsynth.provider.client import Provider, ScriptedBackend
from litsynth.provider.transcript import Transcript
from litsynth.table import (
    Cell,
    distill_snippets,
    export_table_csv,
    export_table_markdown,
    extract_values,
    snippet_overlong,
)

FACETS = [
    make_facet("Application Area", "What domain or task does the system target?"),
    make_facet("Evaluation Method", "How is the approach evaluated?"),
    make_facet("Limitations", "What limitations do the authors report?"),
]


@pytest.fixture
def collection():
    return ingest_collection(fixture_manifest())


class TestExtractValues:
    def test_three_facets_aligned_with_one_null(self, collection, scripted_provider,
                                                extract_profile):
        paper = collection.paper("CorpusId:1104")  # fixture paper with no stated limitations
        values = extract_values(scripted_provider, paper, FACETS, profile=extract_profile)
        assert [facet_id for facet_id, _ in values] == [f.facet_id for f in FACETS]
        assert values[0][1] is not None and values[1][1] is not None
        assert values[2][1] is None

    def test_count_mismatch_is_structured_output_error(self, collection, extract_profile):
        short = json.dumps(
            [{"facet_id": 1, "value": "a"}, {"facet_id": 2, "value": "b"}]
        )
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: short))
        with pytest.raises(StructuredOutputError):
            extract_values(
                provider, collection.papers[0], FACETS,
                profile=extract_profile, max_repair_attempts=0,
            )

    def test_duplicate_facet_ids_rejected(self, collection, extract_profile):
        bad = json.dumps(
            [{"facet_id": 1, "value": "a"}, {"facet_id": 1, "value": "b"},
             {"facet_id": 3, "value": "c"}]
        )
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: bad))
        with pytest.raises(StructuredOutputError):
            extract_values(
                provider, collection.papers[0], FACETS,
                profile=extract_profile, max_repair_attempts=0,
            )

    def test_abstract_only_paper_still_extracts(self, collection, scripted_provider,
                                                 extract_profile):
        paper = collection.paper("CorpusId:1109")
        assert not paper.full_text_available and len(paper.chunks) == 1
        values = extract_values(scripted_provider, paper, FACETS[:1], profile=extract_profile)
        assert values[0][1] is not None

    def test_chunkless_paper_rejected(self, scripted_provider, extract_profile):
        bare = ingest_collection(
            {"name": "bare", "papers": [{"paper_id": "A", "title": "Bare"}]}
        ).papers[0]
        with pytest.raises(ValueError):
            extract_values(scripted_provider, bare, FACETS[:1], profile=extract_profile)

    def test_context_budget_truncates(self, collection, extract_profile):
        captured = {}

        def complete(prompt, profile):
            captured["prompt"] = prompt
            return json.dumps([{"facet_id": 1, "value": "v"}])

        provider = Provider("live", backend=ScriptedBackend(complete=complete))
        extract_values(
            provider, collection.paper("CorpusId:1105"), FACETS[:1],
            profile=extract_profile, context_budget=500,
        )
        context = captured["prompt"].split("Paper Context:\n", 1)[1].split("\n\nFacets:", 1)[0]
        assert len(context) == 500
        assert context.startswith("Title: Streaming Summaries")


class TestDistillSnippets:
    def test_mixed_map_keys_preserved_and_nulls_propagate(self, scripted_provider,
                                                          extract_profile):
        summaries = {
            "CorpusId:123": "The user study demographics consist of 32 trained undergraduates "
                            "who completed at least one course in computer science.",
            "CorpusId:300": None,
        }
        snippets = distill_snippets(
            scripted_provider, FACETS[1], summaries, profile=extract_profile
        )
        assert set(snippets) == set(summaries)
        assert snippets["CorpusId:300"] is None
        assert snippets["CorpusId:123"] is not None
        assert len(snippets["CorpusId:123"].split()) <= 20

    def test_all_null_short_circuits_without_model_call(self, extract_profile):
        def explode(prompt, profile):
            raise AssertionError("model should not be called")

        provider = Provider("live", backend=ScriptedBackend(complete=explode))
        out = distill_snippets(
            provider, FACETS[0], {"A": None, "B": None}, profile=extract_profile
        )
        assert out == {"A": None, "B": None}

    def test_missing_key_names_the_key(self, extract_profile):
        def complete(prompt, profile):
            return json.dumps({"A": "present"})

        provider = Provider("live", backend=ScriptedBackend(complete=complete))
        with pytest.raises(StructuredOutputError) as exc_info:
            distill_snippets(
                provider, FACETS[0], {"A": "sa", "B": "sb"},
                profile=extract_profile, max_repair_attempts=0,
            )
        assert "B" in str(exc_info.value)

    def test_fixture_facet_replay_matches_recording(self, tmp_path, collection,
                                                    extract_profile):
        path = tmp_path / "t.jsonl"
        summaries = {
            p.paper_id: f"The approach is evaluated through careful study of {p.title}."
            for p in collection.papers
        }
        recorder = Provider(
            "record", backend=session_backend(), transcript=Transcript(path, "record")
        )
        recorded = distill_snippets(recorder, FACETS[1], summaries, profile=extract_profile)
        recorder.transcript.close()
        replayer = Provider("replay", transcript=Transcript(path, "replay"))
        assert distill_snippets(replayer, FACETS[1], summaries,
                                profile=extract_profile) == recorded
        assert recorded["CorpusId:1106"] == OVERLONG_SNIPPET

    def test_empty_string_output_becomes_null(self, extract_profile):
        provider = Provider(
            "live", backend=ScriptedBackend(complete=lambda p, pr: json.dumps({"A": ""}))
        )
        assert distill_snippets(provider, FACETS[0], {"A": "text"},
                                profile=extract_profile) == {"A": None}


class TestOverlongFlag:
    def test_flag_matches_whitespace_tokenization(self):
        assert not snippet_overlong(" ".join(["w"] * 20))
        assert snippet_overlong(" ".join(["w"] * 21))
        assert not snippet_overlong(None)
        assert snippet_overlong(OVERLONG_SNIPPET)


class TestColumnPopulation:
    def test_fixture_column_settles_ready(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        column = engine.add_column(cid, "Evaluation Method", "How evaluated?", wait=True)
        assert column.status == "ready"
        cells = engine.store.load_cells(cid, column.column_id)
        assert len(cells) == 10
        assert {c.status for c in cells} <= {"ready", "empty"}
        overlong = [c for c in cells if c.snippet_overlong]
        assert [c.paper_id for c in overlong] == ["CorpusId:1106"]

    def test_null_monotonicity_holds(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        column = engine.add_column(cid, "Limitations", wait=True)
        for cell in engine.store.load_cells(cid, column.column_id):
            if cell.snippet is not None:
                assert cell.summary is not None
            assert cell.snippet_overlong == snippet_overlong(cell.snippet)
            assert (cell.status == "empty") == (
                cell.summary is None and cell.status != "failed"
            )

    def test_single_extraction_failure_isolated(self, tmp_path):
        script = SessionScript()
        target = "Margin Notes at Scale"

        def complete(prompt, profile):
            if prompt.startswith("Use the provided paper context") and target in prompt:
                raise ProviderTransportError("injected")
            return script.complete(prompt, profile)

        engine = make_engine(tmp_path, backend=ScriptedBackend(complete=complete,
                                                               embed=hash_embed))
        cid = engine.create_collection(fixture_manifest()).collection_id
        column = engine.add_column(cid, "Application Area", wait=True)
        assert column.status == "partial-failure"
        cells = {c.paper_id: c for c in engine.store.load_cells(cid, column.column_id)}
        assert cells["CorpusId:1103"].status == "failed"
        others = [c for pid, c in cells.items() if pid != "CorpusId:1103"]
        assert len(others) == 9
        assert all(c.status in ("ready", "empty") for c in others)

    def test_duplicate_facet_name_rejected(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        engine.add_column(cid, "Application Area", wait=True)
        with pytest.raises(DuplicateFacetError):
            engine.add_column(cid, "application area", wait=True)

    def test_replayed_population_is_byte_equal(self, tmp_path):
        transcript_path = tmp_path / "t.jsonl"
        recorder = make_engine(
            tmp_path / "rec", mode="record", backend=session_backend(),
            transcript_path=transcript_path,
        )
        cid = recorder.create_collection(fixture_manifest()).collection_id
        column = recorder.add_column(cid, "Application Area", wait=True)
        recorded = [c.to_dict() for c in recorder.store.load_cells(cid, column.column_id)]
        recorder.provider.transcript.close()

        replays = []
        for run in range(2):
            engine = make_engine(
                tmp_path / f"rep{run}", mode="replay", transcript_path=transcript_path
            )
            rcid = engine.create_collection(fixture_manifest()).collection_id
            rcol = engine.add_column(rcid, "Application Area", wait=True)
            replays.append([c.to_dict() for c in engine.store.load_cells(rcid, rcol.column_id)])
        assert replays[0] == recorded
        assert replays[1] == recorded


class TestTableView:
    def test_grid_shape_and_population_visibility(self, tmp_path):
        gate = threading.Event()
        script = SessionScript()

        def complete(prompt, profile):
            if prompt.startswith("Use the provided paper context"):
                gate.wait(timeout=10)
            return script.complete(prompt, profile)

        engine = make_engine(
            tmp_path, backend=ScriptedBackend(complete=complete, embed=hash_embed),
            config=make_config(limit=2),
        )
        cid = engine.create_collection(fixture_manifest()).collection_id
        column = engine.add_column(cid, "Application Area", wait=False)

        view = engine.get_table(cid)
        assert len(view["rows"]) == 10
        assert [c["column_id"] for c in view["columns"]] == [column.column_id]
        statuses = {row["cells"][column.column_id]["status"] for row in view["rows"]}
        assert statuses == {"pending"}

        gate.set()
        deadline = threading.Event()
        for _ in range(100):
            view = engine.get_table(cid)
            statuses = {row["cells"][column.column_id]["status"] for row in view["rows"]}
            if statuses <= {"ready", "empty"}:
                break
            deadline.wait(0.05)
        assert statuses <= {"ready", "empty"}

    def test_column_order_is_creation_order(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        first = engine.add_column(cid, "Application Area", wait=True)
        second = engine.add_column(cid, "Limitations", wait=True)
        view = engine.get_table(cid)
        assert [c["column_id"] for c in view["columns"]] == [
            first.column_id, second.column_id,
        ]

    def test_exports_render_null_as_dash_and_are_stable(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        engine.add_column(cid, "Limitations", wait=True)
        view = engine.get_table(cid)

        markdown = export_table_markdown(view)
        csv_text = export_table_csv(view)
        assert markdown == export_table_markdown(engine.get_table(cid))
        assert csv_text == export_table_csv(engine.get_table(cid))
        assert "—" in markdown  # CorpusId:1104 has no limitations snippet
        assert "—" in csv_text
        assert markdown.splitlines()[0].startswith("| Paper | Limitations |")
        assert csv_text.splitlines()[0] == "Paper,Limitations"

    def test_cell_set_is_exactly_papers_times_columns(self, tmp_path):
        engine = make_engine(tmp_path, backend=session_backend())
        cid = engine.create_collection(fixture_manifest()).collection_id
        engine.add_column(cid, "Application Area", wait=True)
        engine.add_column(cid, "Limitations", wait=True)
        view = engine.get_table(cid)
        for row in view["rows"]:
            assert set(row["cells"]) == {c["column_id"] for c in view["columns"]}


def test_cell_round_trip():
    cell = Cell("P", "C", summary="s", snippet="x", status="ready", snippet_overlong=False)
    assert Cell.from_dict(cell.to_dict()) == cell
