import json

import httpx
import pytest
from hypothesis import given, strategies as st
from stubs import fixture_manifest

from litsynth.corpus.ingest import (
    chunk_document,
    ingest_collection,
    normalize_whitespace,
    split_long_paragraph,
)
from litsynth.corpus.metadata import MetadataClient
from litsynth.corpus.models import Collection
from litsynth.errors import DuplicatePaperError, ManifestError, MetadataFetchError
from litsynth.service.store import WorkspaceStore


def reassemble(pieces: list[str]) -> str:
    """Independent oracle: splitter output joined on single spaces."""
    return " ".join(pieces)


class TestChunking:
    def test_three_short_paragraphs_one_chunk_each(self):
        text = "First paragraph here.\n\nSecond paragraph here.\n\nThird paragraph here."
        chunks = chunk_document([{"section_path": ["Intro"], "text": text}], 2000)
        assert [c.index for c in chunks] == [0, 1, 2]
        assert [c.text for c in chunks] == [
            "First paragraph here.",
            "Second paragraph here.",
            "Third paragraph here.",
        ]
        assert all(c.section_path == ("Intro",) for c in chunks)

    def test_long_paragraph_splits_at_sentence_boundaries(self):
        sentence = "This sentence pads the paragraph with enough characters to matter. "
        paragraph = (sentence * 72).strip()
        assert len(paragraph) >= 4600
        chunks = chunk_document([{"section_path": [], "text": paragraph}], 2000)
        assert len(chunks) >= 3
        assert all(len(c.text) <= 2000 for c in chunks)
        # Oracle: concatenating the split pieces reproduces the paragraph.
        assert reassemble([c.text for c in chunks]) == normalize_whitespace(paragraph)

    def test_empty_text_gives_empty_list(self):
        assert chunk_document([{"section_path": [], "text": ""}], 2000) == []
        assert chunk_document([], 2000) == []

    def test_minimum_chunk_size_enforced(self):
        with pytest.raises(ValueError):
            chunk_document([{"section_path": [], "text": "hello"}], 100)

    def test_char_spans_ascending_and_exact(self):
        text = "Alpha beta gamma.\n\nDelta epsilon zeta.\n\nEta theta."
        chunks = chunk_document([{"section_path": ["S"], "text": text}], 2000)
        cursor = 0
        for chunk in chunks:
            assert chunk.char_start == cursor
            assert chunk.char_end - chunk.char_start == len(chunk.text)
            cursor = chunk.char_end + 1

    def test_oversized_single_sentence_kept_whole(self):
        sentence = "x" * 2500
        pieces = split_long_paragraph(sentence, 2000)
        assert pieces == [sentence]

    @given(
        st.text(
            alphabet=st.sampled_from(list("abcdef .!?\n")),
            min_size=0,
            max_size=600,
        )
    )
    def test_concatenation_reproduces_normalized_text(self, text):
        chunks = chunk_document([{"section_path": [], "text": text}], 200)
        assert " ".join(c.text for c in chunks) == normalize_whitespace(text)


class TestIngest:
    def test_abstract_fallback_rule(self):
        manifest = {
            "name": "tiny",
            "papers": [
                {
                    "paper_id": "A",
                    "title": "With full text",
                    "full_text": [
                        {"section_path": ["Body"], "text": "One one.\n\nTwo two.\n\nThree three."}
                    ],
                },
                {"paper_id": "B", "title": "Abstract only", "abstract": "Just the abstract."},
            ],
        }
        collection = ingest_collection(manifest)
        assert [len(p.chunks) for p in collection.papers] == [3, 1]
        assert collection.papers[1].chunks[0].section_path == ("Abstract",)
        assert collection.papers[0].full_text_available
        assert not collection.papers[1].full_text_available

    def test_duplicate_paper_id_rejected(self):
        manifest = {
            "name": "dupes",
            "papers": [
                {"paper_id": "CorpusId:9", "title": "First"},
                {"paper_id": "CorpusId:9", "title": "Second"},
            ],
        }
        with pytest.raises(DuplicatePaperError) as exc_info:
            ingest_collection(manifest)
        assert "CorpusId:9" in str(exc_info.value)

    def test_fixture_chunk_counts_match_golden(self, golden_dir):
        golden = json.loads((golden_dir / "ingest_chunk_counts.json").read_text())
        collection = ingest_collection(fixture_manifest())
        assert {p.paper_id: len(p.chunks) for p in collection.papers} == golden

    def test_empty_manifest_rejected(self):
        with pytest.raises(ManifestError):
            ingest_collection({"name": "empty", "papers": []})
        with pytest.raises(ManifestError):
            ingest_collection({"name": "", "papers": [{"paper_id": "A", "title": "T"}]})
        with pytest.raises(ManifestError):
            ingest_collection({"name": "x", "papers": [{"paper_id": "A"}]})

    def test_ingestion_is_idempotent(self):
        manifest = fixture_manifest()
        assert ingest_collection(manifest) == ingest_collection(manifest)

    def test_no_abstract_no_full_text_gives_no_chunks(self):
        collection = ingest_collection(
            {"name": "bare", "papers": [{"paper_id": "A", "title": "Bare"}]}
        )
        assert collection.papers[0].chunks == ()

    def test_dict_round_trip_identity(self):
        collection = ingest_collection(fixture_manifest())
        assert Collection.from_dict(collection.to_dict()) == collection

    def test_store_round_trip_identity(self, tmp_path):
        collection = ingest_collection(fixture_manifest())
        store = WorkspaceStore(tmp_path)
        store.save_collection(collection)
        assert store.load_collection(collection.collection_id) == collection


CANNED_RECORDS = {
    "CorpusId:1": {
        "title": "Known paper",
        "abstract": "An abstract.",
        "authors": [{"name": "Ada L."}],
        "year": 2020,
        "venue": "TestConf",
        "citationCount": 11,
    },
    "CorpusId:2": {"title": "Sparse paper"},
}


def canned_transport() -> httpx.MockTransport:
    def handler(request: httpx.Request) -> httpx.Response:
        ids = json.loads(request.content)["ids"]
        return httpx.Response(200, json=[CANNED_RECORDS.get(i) for i in ids])

    return httpx.MockTransport(handler)


class TestMetadataClient:
    def test_empty_ids_rejected_before_any_network_call(self):
        def explode(request):
            raise AssertionError("network touched")

        client = MetadataClient("https://example.test", transport=httpx.MockTransport(explode))
        with pytest.raises(ValueError):
            client.fetch_metadata([])

    def test_canned_record_surfaces_verbatim(self):
        client = MetadataClient("https://example.test", transport=canned_transport())
        (record,) = client.fetch_metadata(["CorpusId:1"])
        assert record.found
        assert record.title == "Known paper"
        assert record.authors == ("Ada L.",)
        assert record.citation_count == 11

    def test_batch_preserves_request_order_and_marks_not_found(self):
        client = MetadataClient("https://example.test", transport=canned_transport())
        ids = ["CorpusId:2", "CorpusId:404", "CorpusId:1", "CorpusId:405", "CorpusId:2"]
        records = client.fetch_metadata(ids)
        assert [r.paper_id for r in records] == ids
        assert [r.found for r in records] == [True, False, True, False, True]
        # Absent fields stay absent, never fabricated.
        assert records[0].year is None and records[0].venue is None

    def test_transport_failure_raises_retryable_error_with_ids(self):
        def boom(request):
            raise httpx.ConnectError("nope")

        client = MetadataClient("https://example.test", transport=httpx.MockTransport(boom))
        with pytest.raises(MetadataFetchError) as exc_info:
            client.fetch_metadata(["A", "B"])
        assert exc_info.value.failed_ids == ("A", "B")
        assert exc_info.value.retryable
