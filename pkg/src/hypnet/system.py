"""Assemble, persist, and reload complete query systems.

A system is the tokenized corpus, the embedding space, and the layered
network, built in deterministic stages from a raw corpus. Every artifact
is content-digested into a manifest so rebuilds can be audited.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import resource
import time
from dataclasses import dataclass
from pathlib import Path

from .corpus import (
    Corpus,
    JOINER,
    TokenizedCorpus,
    apply_phrases,
    clean_and_tokenize,
    cut_year_filter,
    load_default_stopwords,
    load_tokenized,
    load_vocabulary,
    mine_phrases,
    save_tokenized,
    save_vocabulary,
    tokenize_corpus,
)
from .embedding import EmbeddingSpace, compute_tfidf, doc_centroids, train_embeddings
from .errors import HypnetError
from .network import (
    LAYER_DOCUMENT,
    LAYER_PHRASE,
    TAG_CROSS_TFIDF,
    TAG_DOC_KNN,
    TAG_PHRASE_KNN,
    KnowledgeNetwork,
    OntologyBackbone,
    attach_backbone,
    build_cross_edges,
    build_knn_layer,
    load_network,
    normalize_weights,
    save_network,
)
from .query import QueryConfig

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["manifest_version", "config", "inputs", "artifacts", "stages"],
    "properties": {
        "manifest_version": {"type": "integer"},
        "created_unix": {"type": "number"},
        "config": {"type": "object"},
        "inputs": {
            "type": "object",
            "additionalProperties": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        },
        "artifacts": {
            "type": "object",
            "additionalProperties": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        },
        "stages": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "seconds", "peak_rss_bytes"],
                "properties": {
                    "name": {"type": "string"},
                    "seconds": {"type": "number"},
                    "peak_rss_bytes": {"type": "integer"},
                },
            },
        },
    },
}


@dataclass
class PipelineConfig:
    dim: int = 100
    knn_k: int = 10
    cross_top_m: int = 20
    p: int = 5000
    k_topics: int = 20
    lda_iterations: int = 500
    cut_year: int = 2014
    seed: int = 0
    thread_count: int = 1
    deterministic: bool = True
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 2
    learning_rate: float = 0.025
    max_ngram: int = 3
    phrase_min_count: int = 5
    phrase_min_score: float = 0.0
    knn_method: str = "exact"
    walk_neighbors: int = 3

    def __post_init__(self):
        for name in ("dim", "knn_k", "cross_top_m", "p", "k_topics",
                     "lda_iterations", "cut_year", "thread_count", "window",
                     "negatives", "epochs", "min_count", "max_ngram",
                     "phrase_min_count", "walk_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @property
    def effective_threads(self) -> int:
        return 1 if self.deterministic else self.thread_count

    def query_config(self) -> QueryConfig:
        return QueryConfig(p=self.p, k=self.k_topics,
                           lda_iterations=self.lda_iterations, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise HypnetError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _StageTimer:
    def __init__(self):
        self.stages: list[dict] = []

    def run(self, name, fn):
        start = time.perf_counter()
        result = fn()
        self.stages.append({
            "name": name,
            "seconds": time.perf_counter() - start,
            "peak_rss_bytes": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
        })
        logger.info("stage %s finished in %.2fs", name, self.stages[-1]["seconds"])
        return result


class HypothesisSystem:
    """Everything a query needs: corpus tokens, vectors, and the network."""

    def __init__(self, corpus: TokenizedCorpus, space: EmbeddingSpace,
                 network: KnowledgeNetwork, config: PipelineConfig,
                 vocab=None, system_id: str = "system"):
        self.corpus = corpus
        self.tokenized = {d.id: d for d in corpus}
        self.space = space
        self.network = network
        self.config = config
        self.vocab = vocab
        self.system_id = system_id

    def resolvable_terms(self) -> set[str]:
        """Phrase-layer keys; these resolve in queries and have vectors."""
        return {n.key for n in self.network.nodes if n.layer == LAYER_PHRASE}

    def save(self, out_dir, input_digests: dict = None, stages: list = None) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_tokenized(self.corpus, out / "corpus.tokens.jsonl")
        if self.vocab is not None:
            save_vocabulary(self.vocab, out / "vocab.tsv")
        self.space.save(out / "embeddings.txt")
        save_network(self.network, out / "network.knet", format="binary")
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump(self.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

        artifact_names = ["corpus.tokens.jsonl", "embeddings.txt",
                          "network.knet", "config.json"]
        if self.vocab is not None:
            artifact_names.insert(1, "vocab.tsv")
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "created_unix": time.time(),
            "config": self.config.to_dict(),
            "inputs": dict(input_digests or {}),
            "artifacts": {name: digest_file(out / name) for name in artifact_names},
            "stages": list(stages or []),
        }
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest

    @classmethod
    def load(cls, directory) -> "HypothesisSystem":
        d = Path(directory)
        if not (d / "config.json").exists():
            raise HypnetError(f"{d} does not look like a built system (no config.json)")
        config = PipelineConfig.from_dict(json.loads((d / "config.json").read_text()))
        corpus = load_tokenized(d / "corpus.tokens.jsonl")
        space = EmbeddingSpace.load(d / "embeddings.txt")
        network = load_network(d / "network.knet")
        vocab = load_vocabulary(d / "vocab.tsv") if (d / "vocab.tsv").exists() else None
        return cls(corpus, space, network, config, vocab, system_id=d.name)


def _clean_backbone(backbone: OntologyBackbone, stopwords) -> OntologyBackbone:
    """Aliases are raw phrases; map them onto the token scheme."""
    cleaned = OntologyBackbone(entities=set(backbone.entities),
                               links=set(backbone.links))
    for entity, phrases in backbone.entity_aliases.items():
        for phrase in phrases:
            tokens = clean_and_tokenize(phrase, stopwords)
            if tokens:
                cleaned.add_alias(entity, JOINER.join(tokens))
    return cleaned


def build_system(raw: Corpus, config: PipelineConfig,
                 backbone: OntologyBackbone = None, stopwords=None,
                 system_id: str = "system"):
    """Run the corpus, embedding, and network stages.

    Returns (system, stages) where stages carry per-stage wall-clock and
    peak RSS for the manifest.
    """
    if stopwords is None:
        stopwords = load_default_stopwords()
    timer = _StageTimer()

    def corpus_stage():
        filtered = cut_year_filter(raw, config.cut_year)
        if len(filtered) == 0:
            raise HypnetError("no documents at or before the cut year")
        tokenized = tokenize_corpus(filtered, stopwords)
        vocab = mine_phrases(tokenized, max_n=config.max_ngram,
                             min_count=config.phrase_min_count,
                             min_score=config.phrase_min_score)
        return apply_phrases(tokenized, vocab), vocab

    tokenized, vocab = timer.run("corpus", corpus_stage)

    space = timer.run("embedding", lambda: train_embeddings(
        tokenized, dim=config.dim, window=config.window,
        negatives=config.negatives, epochs=config.epochs, seed=config.seed,
        min_count=config.min_count, learning_rate=config.learning_rate,
        threads=config.effective_threads))

    def network_stage():
        tfidf = compute_tfidf(tokenized)
        centroids = doc_centroids(space, tokenized, tfidf)
        net = KnowledgeNetwork()

        doc_k = min(config.knn_k, len(centroids) - 1)
        if doc_k < config.knn_k:
            logger.warning("document layer smaller than knn_k; using k=%d", doc_k)
        net.add_edges(build_knn_layer(centroids, doc_k, LAYER_DOCUMENT,
                                      method=config.knn_method, seed=config.seed),
                      TAG_DOC_KNN)

        phrase_vecs = {t: space.matrix[i] for t, i in space.index.items()}
        phrase_k = min(config.knn_k, len(phrase_vecs) - 1)
        if phrase_k < config.knn_k:
            logger.warning("phrase layer smaller than knn_k; using k=%d", phrase_k)
        net.add_edges(build_knn_layer(phrase_vecs, phrase_k, LAYER_PHRASE,
                                      method=config.knn_method, seed=config.seed),
                      TAG_PHRASE_KNN)

        in_vocab = {
            doc_id: {t: w for t, w in row.items() if t in space.index}
            for doc_id, row in tfidf.weights.items()
        }
        in_vocab = {d: row for d, row in in_vocab.items() if row}
        cross_table = dataclasses.replace(tfidf, weights=in_vocab)
        net.add_edges(build_cross_edges(cross_table, config.cross_top_m),
                      TAG_CROSS_TFIDF)

        if backbone is not None:
            attach_backbone(net, _clean_backbone(backbone, stopwords), space)
        return normalize_weights(net)

    network = timer.run("network", network_stage)
    system = HypothesisSystem(tokenized, space, network, config, vocab,
                              system_id=system_id)
    return system, timer.stages
