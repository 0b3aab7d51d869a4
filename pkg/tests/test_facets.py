import json
import math

import pytest
from stubs import fixture_manifest, session_backend, sixteen_paper_manifest

from litsynth.corpus.ingest import ingest_collection
from litsynth.errors import ProviderError, RejectionError, StructuredOutputError
from litsynth.facets import (
    Facet,
    FacetCandidate,
    FacetDiscoveryConfig,
    dedupe_facets,
    induce_facets,
    make_facet,
    merge_facets,
    normalized_name,
    sample_subsets,
    suggest_facets,
)
from litsynth.provider.client import Provider, ScriptedBackend
from litsynth.provider.transcript import Transcript


@pytest.fixture
def sixteen():
    return ingest_collection(sixteen_paper_manifest())


class TestSampleSubsets:
    def test_defaults_are_four_by_four(self):
        config = FacetDiscoveryConfig()
        assert (config.n, config.k, config.max_facets) == (4, 4, 20)

    def test_small_collection_clamps_to_size(self):
        collection = ingest_collection(
            {
                "name": "tiny",
                "papers": [{"paper_id": f"P{i}", "title": f"T{i}"} for i in range(3)],
            }
        )
        subsets = sample_subsets(collection, n=4, k=4, seed=1)
        assert len(subsets) == 4
        for subset in subsets:
            assert sorted(subset) == ["P0", "P1", "P2"]

    def test_seeded_run_matches_committed_reference(self, sixteen, fixtures_dir):
        reference = json.loads((fixtures_dir / "subsets_seed7.json").read_text())
        assert sample_subsets(sixteen, reference["n"], reference["k"], reference["seed"]) == (
            reference["subsets"]
        )

    def test_fixed_seed_is_stable(self, sixteen):
        assert sample_subsets(sixteen, 4, 4, 99) == sample_subsets(sixteen, 4, 4, 99)

    def test_subset_members_distinct(self, sixteen):
        for subset in sample_subsets(sixteen, 8, 4, 3):
            assert len(set(subset)) == len(subset)

    def test_empty_collection_rejected(self):
        from litsynth.corpus.models import Collection

        with pytest.raises(RejectionError):
            sample_subsets(Collection("c", "empty", ()), 4, 4, 0)

    def test_appearance_frequency_matches_expectation_over_seeds(self, sixteen):
        """Each paper's appearance count stays within 3 sigma of n*k/N per run."""
        n, k, runs = 4, 4, 1000
        size = len(sixteen.papers)
        counts = {paper_id: 0 for paper_id in sixteen.paper_ids()}
        for seed in range(runs):
            for subset in sample_subsets(sixteen, n, k, seed):
                for paper_id in subset:
                    counts[paper_id] += 1
        p = k / size
        expected = runs * n * p
        sigma = math.sqrt(runs * n * p * (1 - p))
        for paper_id, count in counts.items():
            assert abs(count - expected) <= 3 * sigma, (paper_id, count, expected, sigma)


class TestInduceFacets:
    def test_scripted_subset_includes_study_design(self, fixture_collection, reasoning_profile):
        provider = Provider("live", backend=session_backend())
        candidates = induce_facets(
            provider, list(fixture_collection.papers[:4]), 20,
            profile=reasoning_profile, subset_index=2,
        )
        assert 1 <= len(candidates) <= 20
        assert any(c.name == "Study Design" for c in candidates)
        assert all(c.source_subset_index == 2 for c in candidates)

    def test_replayed_induction_matches_recording(self, tmp_path, fixture_collection,
                                                  reasoning_profile):
        path = tmp_path / "t.jsonl"
        recorder = Provider(
            "record", backend=session_backend(), transcript=Transcript(path, "record")
        )
        recorded = induce_facets(
            recorder, list(fixture_collection.papers[:4]), 20, profile=reasoning_profile
        )
        recorder.transcript.close()
        replayer = Provider("replay", transcript=Transcript(path, "replay"))
        replayed = induce_facets(
            replayer, list(fixture_collection.papers[:4]), 20, profile=reasoning_profile
        )
        assert replayed == recorded

    def test_overlong_list_truncated_with_warning(self, fixture_collection, reasoning_profile,
                                                  caplog):
        oversized = json.dumps(
            [{"name": f"Facet {i}", "description": "d"} for i in range(25)]
        )
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: oversized))
        with caplog.at_level("WARNING"):
            candidates = induce_facets(
                provider, list(fixture_collection.papers[:4]), 20, profile=reasoning_profile
            )
        assert len(candidates) == 20
        assert any("truncating" in record.message for record in caplog.records)

    def test_non_list_is_structured_output_error(self, fixture_collection, reasoning_profile):
        provider = Provider(
            "live", backend=ScriptedBackend(complete=lambda p, pr: '{"not": "a list"}')
        )
        with pytest.raises(StructuredOutputError):
            induce_facets(
                provider, list(fixture_collection.papers[:4]), 20, profile=reasoning_profile
            )


class TestMergeFacets:
    def test_case_variant_names_deduplicated_locally(self, reasoning_profile):
        payload = json.dumps(
            [
                {"name": "User Study", "type": "text", "description": "a"},
                {"name": "user study", "type": "text", "description": "b"},
                {"name": "Metrics", "type": "number", "description": "c"},
            ]
        )
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: payload))
        candidates = [[FacetCandidate("User Study", "", 0)]]
        merged = merge_facets(provider, candidates, 20, profile=reasoning_profile)
        assert [f.name for f in merged] == ["User Study", "Metrics"]
        assert merged[1].value_type == "number"

    def test_single_candidate_survives(self, reasoning_profile):
        payload = json.dumps([{"name": "Solo", "type": "text", "description": "only one"}])
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: payload))
        merged = merge_facets(
            provider, [[FacetCandidate("Solo", "only one", 0)]], 20, profile=reasoning_profile
        )
        assert len(merged) >= 1

    def test_empty_merge_falls_back_to_candidates(self, reasoning_profile):
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: "[]"))
        merged = merge_facets(
            provider,
            [[FacetCandidate("Kept", "desc", 0), FacetCandidate("kept", "dup", 0)]],
            20,
            profile=reasoning_profile,
        )
        assert [f.name for f in merged] == ["Kept"]

    def test_cap_applied_after_dedup(self, reasoning_profile):
        payload = json.dumps(
            [{"name": f"F{i}", "type": "text", "description": "d"} for i in range(30)]
        )
        provider = Provider("live", backend=ScriptedBackend(complete=lambda p, pr: payload))
        merged = merge_facets(
            provider, [[FacetCandidate("x", "", 0)]], 20, profile=reasoning_profile
        )
        assert len(merged) == 20


class TestSuggestFacets:
    def test_fixture_suggestions_match_golden(self, fixture_collection, reasoning_profile,
                                              golden_dir):
        golden = json.loads((golden_dir / "suggested_facets.json").read_text())
        provider = Provider("live", backend=session_backend())
        facets = suggest_facets(provider, fixture_collection, profile=reasoning_profile)
        assert [f.to_dict() for f in facets] == golden["facets"]
        assert len(facets) == 14
        assert all(f.origin == "suggested" for f in facets)

    def test_cap_of_one(self, fixture_collection, reasoning_profile):
        provider = Provider("live", backend=session_backend())
        config = FacetDiscoveryConfig(max_facets=1)
        assert len(suggest_facets(provider, fixture_collection, config,
                                  profile=reasoning_profile)) <= 1

    def test_all_subsets_failing_raises(self, fixture_collection, reasoning_profile):
        def complete(prompt, profile):
            from litsynth.errors import ProviderTransportError

            raise ProviderTransportError("offline")

        provider = Provider("live", backend=ScriptedBackend(complete=complete))
        with pytest.raises(ProviderError):
            suggest_facets(provider, fixture_collection, profile=reasoning_profile)

    def test_partial_subset_failure_tolerated(self, fixture_collection, reasoning_profile):
        script = session_backend()
        calls = {"n": 0}

        def complete(prompt, profile):
            if prompt.startswith("A user wants"):
                calls["n"] += 1
                if calls["n"] == 1:
                    from litsynth.errors import ProviderTransportError

                    raise ProviderTransportError("flaky")
            return script.complete(prompt, profile)

        provider = Provider("live", backend=ScriptedBackend(complete=complete))
        config = FacetDiscoveryConfig(n=4, k=4, seed=5)
        facets = suggest_facets(provider, fixture_collection, config, profile=reasoning_profile)
        assert facets


class TestFacetType:
    def test_name_uniqueness_normalization(self):
        assert normalized_name("  User   Study ") == "user study"

    def test_invalid_value_type_rejected(self):
        with pytest.raises(RejectionError):
            Facet(facet_id="f", name="X", value_type="enum")

    def test_empty_name_rejected(self):
        with pytest.raises(RejectionError):
            make_facet("   ")

    def test_dedupe_keeps_first(self):
        facets = [make_facet("Alpha", "first"), make_facet("ALPHA", "second"), make_facet("Beta")]
        assert [f.description for f in dedupe_facets(facets)] == ["first", ""]
