import json

import jsonschema
import numpy as np
import pytest

from hypnet.errors import HypnetError
from hypnet.network import LAYER_DOCUMENT, LAYER_ENTITY, LAYER_PHRASE, OntologyBackbone
from hypnet.query import run_query
from hypnet.system import (
    MANIFEST_SCHEMA,
    HypothesisSystem,
    PipelineConfig,
    build_system,
    digest_file,
)

from synth import bridge_corpus


@pytest.fixture(scope="module")
def built():
    corpus, records, triples = bridge_corpus(seed=3, n_triples=10, docs_per_link=8,
                                             n_distractors=20, distractor_docs=60,
                                             pad=6)
    config = PipelineConfig(dim=24, knn_k=4, cross_top_m=4, p=15, k_topics=3,
                            lda_iterations=30, cut_year=2014, seed=3,
                            phrase_min_count=10**6, epochs=4)
    system, stages = build_system(corpus, config, system_id="built-fixture")
    return corpus, config, system, stages


class TestPipelineConfig:
    def test_defaults_match_stated_values(self):
        config = PipelineConfig()
        assert config.dim == 100
        assert config.knn_k == 10
        assert config.cross_top_m == 20
        assert config.p == 5000
        assert config.k_topics == 20
        assert config.lda_iterations == 500
        assert config.cut_year == 2014
        assert config.deterministic is True

    def test_positive_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(dim=0)
        with pytest.raises(ValueError):
            PipelineConfig(p=-5)

    def test_round_trip_dict(self):
        config = PipelineConfig(dim=32, seed=9)
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_unknown_keys_rejected(self):
        with pytest.raises(HypnetError, match="unknown config"):
            PipelineConfig.from_dict({"bogus": 1})

    def test_deterministic_forces_single_thread(self):
        config = PipelineConfig(thread_count=8, deterministic=True)
        assert config.effective_threads == 1
        config = PipelineConfig(thread_count=8, deterministic=False)
        assert config.effective_threads == 8


class TestBuildSystem:
    def test_layers_present(self, built):
        _, _, system, _ = built
        layers = {n.layer for n in system.network.nodes}
        assert LAYER_DOCUMENT in layers
        assert LAYER_PHRASE in layers

    def test_stage_records(self, built):
        _, _, _, stages = built
        names = [s["name"] for s in stages]
        assert names == ["corpus", "embedding", "network"]
        for s in stages:
            assert s["seconds"] >= 0
            assert s["peak_rss_bytes"] > 0

    def test_resolvable_terms_are_queryable(self, built):
        _, config, system, _ = built
        terms = system.resolvable_terms()
        assert "anode00" in terms
        res = run_query(system, "anode00", "cnode00", config.query_config())
        assert len(res.cloud) > 0

    def test_cut_year_filters_documents(self, built):
        corpus, config, system, _ = built
        assert all(d.pub_year <= config.cut_year for d in system.corpus)

    def test_mean_edge_weight_normalized(self, built):
        _, _, system, _ = built
        weights = np.asarray(system.network.edge_weight)
        tags = np.asarray(system.network.edge_tag)
        for t in set(tags.tolist()):
            assert weights[tags == t].mean() == pytest.approx(1.0, rel=1e-9)

    def test_backbone_attached(self):
        corpus, _, _ = bridge_corpus(seed=5, n_triples=6, docs_per_link=6,
                                     n_distractors=15, distractor_docs=40, pad=5)
        bb = OntologyBackbone()
        bb.add_link("Entity One", "Entity Two")
        bb.add_alias("Entity One", "anode00")
        config = PipelineConfig(dim=16, knn_k=3, cross_top_m=3, p=10, k_topics=2,
                                lda_iterations=20, cut_year=2014, seed=5,
                                phrase_min_count=10**6, epochs=3)
        system, _ = build_system(corpus, config, backbone=bb)
        assert system.network.has_node(("entity", "Entity One"))
        assert system.network.has_node(("entity", "Entity Two"))

    def test_empty_after_cut_is_error(self):
        corpus, _, _ = bridge_corpus(seed=5, n_triples=4, docs_per_link=4,
                                     n_distractors=10, distractor_docs=20, pad=5)
        config = PipelineConfig(dim=16, knn_k=3, cross_top_m=3, cut_year=1800,
                                phrase_min_count=10**6)
        with pytest.raises(HypnetError, match="cut year"):
            build_system(corpus, config)


class TestPersistence:
    def test_save_load_round_trip(self, built, tmp_path):
        _, config, system, stages = built
        out = tmp_path / "sys"
        system.save(out, stages=stages)
        loaded = HypothesisSystem.load(out)
        assert loaded.space.tokens == system.space.tokens
        assert np.array_equal(loaded.space.matrix, system.space.matrix)
        assert loaded.network.nodes == system.network.nodes
        assert loaded.network.edge_weight == system.network.edge_weight
        assert loaded.config == system.config
        assert set(loaded.tokenized) == set(system.tokenized)

    def test_loaded_system_queries_identically(self, built, tmp_path):
        _, config, system, _ = built
        out = tmp_path / "sys"
        system.save(out)
        loaded = HypothesisSystem.load(out)
        qc = config.query_config()
        r1 = run_query(system, "anode01", "cnode01", qc)
        r2 = run_query(loaded, "anode01", "cnode01", qc)
        assert r1.to_json_dict() == r2.to_json_dict()

    def test_manifest_validates_against_schema(self, built, tmp_path):
        _, _, system, stages = built
        out = tmp_path / "sys"
        manifest = system.save(out, input_digests={"corpus.jsonl": "0" * 64},
                               stages=stages)
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
        on_disk = json.loads((out / "manifest.json").read_text())
        jsonschema.validate(on_disk, MANIFEST_SCHEMA)

    def test_rebuild_same_seed_identical_digests(self, tmp_path):
        corpus, _, _ = bridge_corpus(seed=11, n_triples=8, docs_per_link=6,
                                     n_distractors=15, distractor_docs=40, pad=5)
        config = PipelineConfig(dim=16, knn_k=3, cross_top_m=3, p=10, k_topics=2,
                                lda_iterations=20, cut_year=2014, seed=11,
                                phrase_min_count=10**6, epochs=3)
        manifests = []
        for run in range(2):
            system, stages = build_system(corpus, config)
            manifests.append(system.save(tmp_path / f"run{run}", stages=stages))
        assert manifests[0]["artifacts"] == manifests[1]["artifacts"]

    def test_different_seed_changes_digests(self, tmp_path):
        corpus, _, _ = bridge_corpus(seed=11, n_triples=8, docs_per_link=6,
                                     n_distractors=15, distractor_docs=40, pad=5)
        manifests = []
        for seed in (1, 2):
            config = PipelineConfig(dim=16, knn_k=3, cross_top_m=3, p=10, k_topics=2,
                                    lda_iterations=20, cut_year=2014, seed=seed,
                                    phrase_min_count=10**6, epochs=3)
            system, _ = build_system(corpus, config)
            manifests.append(system.save(tmp_path / f"seed{seed}"))
        assert (manifests[0]["artifacts"]["embeddings.txt"]
                != manifests[1]["artifacts"]["embeddings.txt"])

    def test_load_rejects_non_system_dir(self, tmp_path):
        with pytest.raises(HypnetError, match="config.json"):
            HypothesisSystem.load(tmp_path)

    def test_digest_file_is_sha256(self, tmp_path):
        path = tmp_path / "x"
        path.write_bytes(b"hello")
        assert digest_file(path) == (
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824")
