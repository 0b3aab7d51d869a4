import math
import random

import pytest
from stubs import fixture_manifest, hash_embed

from litsynth.attribution import ChunkVectorCache, EvidenceLocation, cosine, locate_evidence
from litsynth.corpus.ingest import ingest_collection
from litsynth.provider.client import Provider, ScriptedBackend
from litsynth.provider.transcript import Transcript
from litsynth.service.store import WorkspaceStore


def oracle_cosine(a, b) -> float:
    """Independent scorer: plain-Python dot product and norms."""
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    return dot / (norm_a * norm_b)


def oracle_argmax(snippet_vector, chunk_vectors) -> tuple[int, float]:
    """Brute-force max with first-wins tie-break, independent of the library path."""
    best_index, best_score = 0, oracle_cosine(snippet_vector, chunk_vectors[0])
    for index, vector in enumerate(chunk_vectors):
        score = oracle_cosine(snippet_vector, vector)
        if score > best_score:
            best_index, best_score = index, score
    return best_index, best_score


def embed_provider() -> Provider:
    return Provider("live", backend=ScriptedBackend(embed=hash_embed))


class TestCosine:
    def test_identical_unit_vectors(self):
        assert cosine((1.0, 0.0), (1.0, 0.0)) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine((1.0, 0.0), (0.0, 1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_hand_oracle_inverse_sqrt_two(self):
        # dot((1,0),(1,1)) / (1 * sqrt(2)) = 1/sqrt(2)
        assert abs(cosine((1.0, 0.0), (1.0, 1.0)) - 1 / math.sqrt(2)) < 1e-9

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            cosine((0.0, 0.0), (1.0, 0.0))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cosine((1.0, 0.0), (1.0, 0.0, 0.0))

    def test_agrees_with_independent_scorer(self):
        rng = random.Random(11)
        for _ in range(200):
            a = [rng.uniform(-1, 1) for _ in range(8)]
            b = [rng.uniform(-1, 1) for _ in range(8)]
            assert abs(cosine(a, b) - oracle_cosine(a, b)) < 1e-9


def make_paper(chunk_texts):
    return ingest_collection(
        {
            "name": "synthetic",
            "papers": [
                {
                    "paper_id": "SYN:1",
                    "title": "Synthetic",
                    "full_text": [
                        {"section_path": ["S"], "text": "\n\n".join(chunk_texts)}
                    ],
                }
            ],
        }
    ).papers[0]


class TestLocateEvidence:
    def test_singleton_paper(self):
        paper = make_paper(["only one chunk of text."])
        provider = embed_provider()
        location = locate_evidence(provider, "anything at all", paper)
        assert location.chunk_index == 0
        vectors = provider.embed_texts(["anything at all", paper.chunks[0].text])
        assert location.score == pytest.approx(oracle_cosine(vectors[0], vectors[1]), abs=1e-12)

    def test_identity_embedding_finds_exact_chunk(self):
        texts = [f"chunk number {i} text." for i in range(6)]
        paper = make_paper(texts)
        location = locate_evidence(embed_provider(), texts[4], paper)
        assert location.chunk_index == 4
        assert location.score == pytest.approx(1.0, abs=1e-9)

    def test_thirty_chunk_brute_force_oracle(self):
        rng = random.Random(7)
        words = ["retrieval", "summary", "interface", "study", "taxonomy", "pipeline",
                 "evidence", "reading", "table", "citation"]
        texts = [
            " ".join(rng.choice(words) for _ in range(12)) + "." for _ in range(30)
        ]
        paper = make_paper(texts)
        provider = embed_provider()
        chunk_vectors = provider.embed_texts([c.text for c in paper.chunks])
        for _ in range(100):
            snippet = " ".join(rng.choice(words) for _ in range(6))
            location = locate_evidence(provider, snippet, paper)
            snippet_vector = provider.embed_texts([snippet])[0]
            expected_index, expected_score = oracle_argmax(snippet_vector, chunk_vectors)
            assert location.chunk_index == expected_index
            assert abs(location.score - expected_score) < 1e-9

    def test_tie_breaks_to_lowest_index(self):
        texts = ["alpha beta gamma.", "delta epsilon.", "alpha beta gamma.", "zeta eta."]
        paper = make_paper(texts)
        location = locate_evidence(embed_provider(), "alpha beta gamma.", paper)
        assert location.chunk_index == 0
        assert location.score == pytest.approx(1.0, abs=1e-9)

    def test_score_dominates_every_other_chunk(self):
        texts = [f"text variant {i} about tools." for i in range(8)]
        paper = make_paper(texts)
        provider = embed_provider()
        location = locate_evidence(provider, "tools for variant work", paper)
        assert -1.0 <= location.score <= 1.0
        snippet_vector = provider.embed_texts(["tools for variant work"])[0]
        for chunk in paper.chunks:
            other = oracle_cosine(snippet_vector, provider.embed_texts([chunk.text])[0])
            assert location.score >= other - 1e-12

    def test_empty_snippet_rejected(self):
        paper = make_paper(["something."])
        with pytest.raises(ValueError):
            locate_evidence(embed_provider(), "   ", paper)

    def test_section_path_copied_from_chunk(self):
        paper = ingest_collection(fixture_manifest()).paper("CorpusId:1101")
        location = locate_evidence(embed_provider(), "reading support workflows", paper)
        assert location.section_path == paper.chunks[location.chunk_index].section_path


class CountingBackend:
    def __init__(self):
        self.calls = 0

    def embed(self, texts, model):
        self.calls += 1
        return hash_embed(texts, model)

    def complete(self, prompt, profile):
        raise AssertionError("not used")


class TestChunkVectorCache:
    def test_second_call_issues_no_embedding_requests(self):
        backend = CountingBackend()
        provider = Provider("live", backend=backend)
        cache = ChunkVectorCache(provider)
        paper = make_paper(["one.", "two.", "three."])
        first = cache.vectors(paper)
        assert backend.calls == 1
        second = cache.vectors(paper)
        assert backend.calls == 1
        assert second == first

    def test_model_change_invalidates(self, tmp_path):
        store = WorkspaceStore(tmp_path)
        backend = CountingBackend()
        paper = make_paper(["one.", "two."])

        provider_a = Provider("live", backend=backend, embedding_model="model-a")
        ChunkVectorCache(provider_a, store).vectors(paper)
        assert backend.calls == 1

        # Same store, same paper, new model id: must recompute.
        provider_b = Provider("live", backend=backend, embedding_model="model-b")
        ChunkVectorCache(provider_b, store).vectors(paper)
        assert backend.calls == 2

        # Same model id again: served from the persisted store, no new requests.
        provider_c = Provider("live", backend=backend, embedding_model="model-a")
        ChunkVectorCache(provider_c, store).vectors(paper)
        assert backend.calls == 2

    def test_cache_transparency(self):
        paper = make_paper([f"chunk {i}." for i in range(5)])
        provider = embed_provider()
        cached = locate_evidence(provider, "chunk query", paper,
                                 cache=ChunkVectorCache(provider))
        uncached = locate_evidence(provider, "chunk query", paper)
        assert cached == uncached

    def test_vectors_replay_bit_equal(self, tmp_path):
        path = tmp_path / "t.jsonl"
        paper = make_paper(["one.", "two.", "three."])
        recorder = Provider(
            "record", backend=ScriptedBackend(embed=hash_embed),
            transcript=Transcript(path, "record"),
        )
        recorded = ChunkVectorCache(recorder).vectors(paper)
        recorder.transcript.close()
        replayer = Provider("replay", transcript=Transcript(path, "replay"))
        assert ChunkVectorCache(replayer).vectors(paper) == recorded


def test_evidence_location_wire_form():
    location = EvidenceLocation("P", 3, 0.5, ("Intro",))
    assert location.to_dict() == {
        "paper_id": "P", "chunk_index": 3, "score": 0.5, "section_path": ["Intro"],
    }
