"""Phrase embeddings, TF-IDF weights, and document centroids.

The trainer is plain skip-gram with negative sampling over the tokenized
corpus: single-threaded mode is bitwise reproducible for a fixed seed;
multi-threaded mode runs lock-free over shards and is not.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit

from ._rng import seed_state, uniform, xorshift
from .corpus import TokenizedCorpus, TokenizedDocument
from .errors import HypnetError, OovError

logger = logging.getLogger(__name__)

MIN_LEARNING_RATE_FACTOR = 1e-4


class DegenerateVocabularyError(HypnetError):
    pass


class EmbeddingSpace:
    """A dense vector per token, all of one dimensionality."""

    def __init__(self, tokens: list[str], matrix: np.ndarray):
        if matrix.ndim != 2 or matrix.shape[0] != len(tokens):
            raise ValueError("matrix must be (n_tokens, dim)")
        self.tokens = list(tokens)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.matrix[self.index[token]]
        except KeyError:
            raise OovError(token) from None

    def save(self, path) -> None:
        """Text format: header "dim <d> vocab <n>", one token per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"dim {self.dim} vocab {len(self.tokens)}\n")
            for tok, row in zip(self.tokens, self.matrix):
                fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingSpace":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 4 or header[0] != "dim" or header[2] != "vocab":
                raise HypnetError(f"bad embedding file header in {path}")
            dim, vocab = int(header[1]), int(header[3])
            tokens = []
            rows = np.empty((vocab, dim), dtype=np.float64)
            for i in range(vocab):
                parts = fh.readline().split()
                if len(parts) != dim + 1:
                    raise HypnetError(f"truncated embedding file {path} at row {i}")
                tokens.append(parts[0])
                rows[i] = [float(x) for x in parts[1:]]
        return cls(tokens, rows)


def embed_term(space: EmbeddingSpace, term: str) -> np.ndarray:
    """The stored vector for a token; OOV terms raise, never zero-fill."""
    return space.vector(term)


# ---------------------------------------------------------------------------
# Skip-gram negative-sampling trainer
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _sgns_pairs(w_in, w_out, centers, contexts, noise_cum, negatives,
                lr_start, lr_end, seed):
    """One pass of sequential SGD over (center, context) pairs."""
    n_pairs = centers.shape[0]
    dim = w_in.shape[1]
    grad_c = np.empty(dim, dtype=np.float32)
    state = seed_state(seed)
    for i in range(n_pairs):
        lr = lr_start + (lr_end - lr_start) * (i / n_pairs)
        c = centers[i]
        for t in range(dim):
            grad_c[t] = 0.0
        for j in range(negatives + 1):
            if j == 0:
                target = contexts[i]
                label = 1.0
            else:
                state = xorshift(state)
                r = uniform(state)
                target = np.searchsorted(noise_cum, r)
                label = 0.0
            dot = 0.0
            for t in range(dim):
                dot += w_in[c, t] * w_out[target, t]
            if dot > 30.0:
                sig = 1.0
            elif dot < -30.0:
                sig = 0.0
            else:
                sig = 1.0 / (1.0 + math.exp(-dot))
            g = (sig - label) * lr
            for t in range(dim):
                tmp = w_out[target, t]
                grad_c[t] += g * tmp
                w_out[target, t] = tmp - g * w_in[c, t]
        for t in range(dim):
            w_in[c, t] -= grad_c[t]


def _epoch_pairs(flat: np.ndarray, doc_ids: np.ndarray, window: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Skip-gram pairs with the usual random window shrinkage, shuffled."""
    n = flat.shape[0]
    shrink = rng.integers(1, window + 1, size=n)
    cs, os = [], []
    for d in range(1, window + 1):
        same = doc_ids[:-d] == doc_ids[d:]
        fwd = np.nonzero(same & (shrink[:-d] >= d))[0]
        bwd = np.nonzero(same & (shrink[d:] >= d))[0]
        cs.append(fwd)
        os.append(fwd + d)
        cs.append(bwd + d)
        os.append(bwd)
    centers = np.concatenate(cs) if cs else np.empty(0, dtype=np.int64)
    contexts = np.concatenate(os) if os else np.empty(0, dtype=np.int64)
    perm = rng.permutation(centers.shape[0])
    return flat[centers[perm]].astype(np.int32), flat[contexts[perm]].astype(np.int32)


def train_embeddings(corpus: TokenizedCorpus, dim: int = 100, window: int = 5,
                     negatives: int = 5, epochs: int = 5, seed: int = 0,
                     min_count: int = 2, learning_rate: float = 0.025,
                     threads: int = 1) -> EmbeddingSpace:
    """Train skip-gram-with-negative-sampling vectors over the corpus.

    Tokens with corpus count below min_count are dropped. With threads=1
    the result is bitwise reproducible for a fixed seed.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if len(corpus) == 0:
        raise HypnetError("cannot train embeddings on an empty corpus")

    counts: dict[str, int] = {}
    for doc in corpus:
        for t in doc.tokens:
            counts[t] = counts.get(t, 0) + 1
    vocab = sorted((t for t, c in counts.items() if c >= min_count),
                   key=lambda t: (-counts[t], t))
    if len(vocab) < 2:
        raise DegenerateVocabularyError(
            f"degenerate vocabulary: {len(vocab)} token(s) with count >= {min_count}")
    index = {t: i for i, t in enumerate(vocab)}

    encoded = []
    doc_ids = []
    for di, doc in enumerate(corpus):
        ids = [index[t] for t in doc.tokens if t in index]
        encoded.extend(ids)
        doc_ids.extend([di] * len(ids))
    flat = np.asarray(encoded, dtype=np.int64)
    doc_arr = np.asarray(doc_ids, dtype=np.int64)

    freq = np.array([counts[t] for t in vocab], dtype=np.float64)
    noise = freq ** 0.75
    noise_cum = np.cumsum(noise / noise.sum())
    noise_cum[-1] = 1.0

    rng = np.random.default_rng(seed)
    w_in = ((rng.random((len(vocab), dim)) - 0.5) / dim).astype(np.float32)
    w_out = np.zeros((len(vocab), dim), dtype=np.float32)

    lr_floor = learning_rate * MIN_LEARNING_RATE_FACTOR
    base_seed = (seed % 2**31) * 1009
    for epoch in range(epochs):
        centers, contexts = _epoch_pairs(flat, doc_arr, window, rng)
        if centers.shape[0] == 0:
            continue
        lr_start = max(learning_rate * (1 - epoch / epochs), lr_floor)
        lr_end = max(learning_rate * (1 - (epoch + 1) / epochs), lr_floor)
        epoch_seed = base_seed + epoch * 31
        if threads <= 1:
            _sgns_pairs(w_in, w_out, centers, contexts, noise_cum,
                        negatives, lr_start, lr_end, epoch_seed)
        else:
            # lock-free shards; results are not reproducible
            shards = np.array_split(np.arange(centers.shape[0]), threads)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futs = [
                    pool.submit(_sgns_pairs, w_in, w_out, centers[shard],
                                contexts[shard], noise_cum, negatives,
                                lr_start, lr_end, epoch_seed + si + 1)
                    for si, shard in enumerate(shards) if shard.size
                ]
                for f in futs:
                    f.result()

    return EmbeddingSpace(vocab, w_in.astype(np.float64))


# ---------------------------------------------------------------------------
# TF-IDF and centroids
# ---------------------------------------------------------------------------

@dataclass
class TfIdfTable:
    """Positive tf-idf weights per document; zero-weight entries are omitted."""

    weights: dict[str, dict[str, float]]
    doc_freq: dict[str, int]
    n_docs: int

    def weight(self, doc_id: str, token: str) -> float:
        return self.weights.get(doc_id, {}).get(token, 0.0)


def compute_tfidf(corpus: TokenizedCorpus) -> TfIdfTable:
    """weight(d, t) = tf(d, t) * ln(n_docs / doc_freq(t)).

    Tokens occurring in every document have idf 0 and carry no entry.
    """
    if len(corpus) == 0:
        raise HypnetError("cannot compute tf-idf of an empty corpus")
    doc_freq: dict[str, int] = {}
    for doc in corpus:
        for t in set(doc.tokens):
            doc_freq[t] = doc_freq.get(t, 0) + 1
    n_docs = len(corpus)
    idf = {t: math.log(n_docs / df) for t, df in doc_freq.items()}

    weights: dict[str, dict[str, float]] = {}
    for doc in corpus:
        tf: dict[str, int] = {}
        for t in doc.tokens:
            tf[t] = tf.get(t, 0) + 1
        row = {t: c * idf[t] for t, c in tf.items() if idf[t] > 0.0}
        if row:
            weights[doc.id] = row
    return TfIdfTable(weights, doc_freq, n_docs)


@dataclass(frozen=True)
class DocumentVector:
    doc_id: str
    vector: np.ndarray


def doc_centroid(space: EmbeddingSpace, doc: TokenizedDocument,
                 tfidf: TfIdfTable) -> DocumentVector:
    """TF-IDF-weighted average of the document's in-vocabulary tokens.

    Documents with no weighted in-vocabulary token get the zero vector.
    """
    acc = np.zeros(space.dim, dtype=np.float64)
    denom = 0.0
    for token, w in tfidf.weights.get(doc.id, {}).items():
        idx = space.index.get(token)
        if idx is None:
            continue
        acc += w * space.matrix[idx]
        denom += w
    if denom > 0.0:
        acc /= denom
    return DocumentVector(doc.id, acc)


def doc_centroids(space: EmbeddingSpace, corpus: TokenizedCorpus,
                  tfidf: TfIdfTable) -> dict[str, np.ndarray]:
    """Centroids for every document, keyed by id."""
    return {doc.id: doc_centroid(space, doc, tfidf).vector for doc in corpus}
