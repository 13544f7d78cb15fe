"""Topic models by collapsed Gibbs sampling.

The sampler sweeps token-topic assignments for a fixed number of
iterations and reads the word distributions off the final counts with
symmetric smoothing. Single-threaded and bitwise deterministic for a
fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import seed_state, uniform, xorshift
from .errors import HypnetError

logger = logging.getLogger(__name__)

TOP_WORDS_PER_TOPIC = 10


@dataclass
class TopicModel:
    """k topics: per-topic word distributions and assignment counts."""

    k: int
    word_dists: list[dict[str, float]]
    topic_doc_counts: list[int]
    top_words: list[list[str]]

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "topics": [
                {
                    "index": i,
                    "token_count": self.topic_doc_counts[i],
                    "top_words": [
                        {"token": t, "probability": self.word_dists[i][t]}
                        for t in self.top_words[i]
                    ],
                }
                for i in range(self.k)
            ],
        }


@njit(cache=True, nogil=True)
def _gibbs(tokens, doc_of, n_docs, k, vocab_size, iterations, alpha, beta, seed):
    n = tokens.shape[0]
    z = np.empty(n, dtype=np.int32)
    n_dk = np.zeros((n_docs, k), dtype=np.int32)
    n_kw = np.zeros((k, vocab_size), dtype=np.int32)
    n_k = np.zeros(k, dtype=np.int64)

    state = seed_state(seed)
    for i in range(n):
        state = xorshift(state)
        t = int(uniform(state) * k)
        if t >= k:
            t = k - 1
        z[i] = t
        n_dk[doc_of[i], t] += 1
        n_kw[t, tokens[i]] += 1
        n_k[t] += 1

    vbeta = vocab_size * beta
    cum = np.empty(k, dtype=np.float64)
    for _ in range(iterations):
        for i in range(n):
            w = tokens[i]
            d = doc_of[i]
            t = z[i]
            n_dk[d, t] -= 1
            n_kw[t, w] -= 1
            n_k[t] -= 1

            total = 0.0
            for tt in range(k):
                total += (n_dk[d, tt] + alpha) * (n_kw[tt, w] + beta) / (n_k[tt] + vbeta)
                cum[tt] = total
            state = xorshift(state)
            r = uniform(state) * total
            t = 0
            while t < k - 1 and cum[t] <= r:
                t += 1
            z[i] = t
            n_dk[d, t] += 1
            n_kw[t, w] += 1
            n_k[t] += 1
    return n_kw, n_k


def fit_lda(docs, k: int, iterations: int = 500, alpha: float = None,
            beta: float = 0.01, seed: int = 0) -> TopicModel:
    """Fit k topics to tokenized documents.

    docs may be token sequences or TokenizedDocument objects; empty
    documents are ignored, and a corpus of only empty documents is an
    error. alpha defaults to 50/k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if alpha is None:
        alpha = 50.0 / k

    token_lists = [list(getattr(d, "tokens", d)) for d in docs]
    token_lists = [t for t in token_lists if t]
    if not token_lists:
        raise HypnetError("cannot fit a topic model: all documents are empty")

    vocab = sorted({t for toks in token_lists for t in toks})
    index = {t: i for i, t in enumerate(vocab)}
    flat = []
    doc_of = []
    for di, toks in enumerate(token_lists):
        flat.extend(index[t] for t in toks)
        doc_of.extend([di] * len(toks))
    tokens = np.asarray(flat, dtype=np.int32)
    doc_arr = np.asarray(doc_of, dtype=np.int32)

    n_kw, n_k = _gibbs(tokens, doc_arr, len(token_lists), k, len(vocab),
                       iterations, float(alpha), float(beta),
                       int(seed) % 2**31)

    vbeta = len(vocab) * beta
    word_dists = []
    top_words = []
    for t in range(k):
        denom = n_k[t] + vbeta
        dist = {w: float((n_kw[t, wi] + beta) / denom) for wi, w in enumerate(vocab)}
        word_dists.append(dist)
        ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
        top_words.append([w for w, _ in ranked[:TOP_WORDS_PER_TOPIC]])
    return TopicModel(k, word_dists, [int(x) for x in n_k], top_words)
