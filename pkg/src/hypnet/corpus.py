"""Corpus ingestion, cleaning, phrase mining, filtering, and sampling.

Documents come in as JSONL records, are cleaned into stemmed token
streams, optionally merged into multi-word phrases, and handed to the
embedding and network stages. Everything here is a pure function of its
inputs plus an explicit seed.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

import numpy as np

from .porter import stem

logger = logging.getLogger(__name__)

KINDS = ("abstract", "full_text")

# Joins the unigrams of a merged phrase; stripped from unigrams during
# cleaning so it can never collide.
JOINER = "_"

_STRIP_RE = re.compile(r"[^0-9a-z\-]+")


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    body: str
    pub_year: int
    kind: str


@dataclass(frozen=True)
class TokenizedDocument:
    id: str
    tokens: tuple[str, ...]
    pub_year: int
    kind: str


class _BaseCorpus:
    def __init__(self, docs):
        self.docs = list(docs)
        self._by_id = {d.id: d for d in self.docs}

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def __getitem__(self, doc_id: str):
        return self._by_id[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def ids(self) -> list[str]:
        return [d.id for d in self.docs]


class Corpus(_BaseCorpus):
    """An ordered collection of raw documents with unique ids."""

    def __init__(self, docs: Iterable[Document] = (), n_rejected: int = 0):
        super().__init__(docs)
        self.n_rejected = n_rejected


class TokenizedCorpus(_BaseCorpus):
    """An ordered collection of tokenized documents with unique ids."""

    def __init__(self, docs: Iterable[TokenizedDocument] = ()):
        super().__init__(docs)


@dataclass(frozen=True)
class PhraseEntry:
    corpus_count: int
    doc_frequency: int
    score: float


@dataclass
class PhraseVocabulary:
    """Scored multi-word phrases, keyed by their unigram tuple."""

    phrases: dict[tuple[str, ...], PhraseEntry]

    def __len__(self) -> int:
        return len(self.phrases)

    def __contains__(self, gram) -> bool:
        return tuple(gram) in self.phrases

    def max_n(self) -> int:
        return max((len(g) for g in self.phrases), default=0)


@dataclass(frozen=True)
class CorpusStats:
    total_words: int
    unique_words: int
    corpus_size: int
    median_words_per_doc: int


def load_default_stopwords() -> frozenset[str]:
    """Stemmed English function words shipped with the package."""
    text = resources.files("hypnet.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_stopwords(path) -> frozenset[str]:
    """Read a stopword file: one stem per line, blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = ("id", "title", "body", "pub_year", "kind")


def _validate_record(rec) -> Union[Document, str]:
    if not isinstance(rec, dict):
        return "record is not an object"
    for name in _REQUIRED_FIELDS:
        if name not in rec:
            return f"missing field {name!r}"
    if not isinstance(rec["id"], str) or not rec["id"]:
        return "id must be a non-empty string"
    if not isinstance(rec["title"], str) or not isinstance(rec["body"], str):
        return "title and body must be strings"
    if isinstance(rec["pub_year"], bool) or not isinstance(rec["pub_year"], int):
        return "pub_year must be an integer"
    if rec["pub_year"] <= 0:
        return "pub_year must be positive"
    if rec["kind"] not in KINDS:
        return f"kind must be one of {KINDS}"
    if not rec["title"] and not rec["body"]:
        return "title and body are both empty"
    return Document(rec["id"], rec["title"], rec["body"], rec["pub_year"], rec["kind"])


def ingest(source: Union[str, Path, IO[str]], format: str = "jsonl") -> Corpus:
    """Read a JSONL document stream into a Corpus.

    Invalid records (bad JSON, missing fields, duplicate ids) are counted
    on the returned corpus and logged, not fatal. An unreadable source
    raises the underlying I/O error.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format!r}")
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return ingest(fh, format=format)

    docs: list[Document] = []
    seen: set[str] = set()
    n_rejected = 0
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            n_rejected += 1
            logger.warning("line %d rejected: invalid JSON (%s)", lineno, exc)
            continue
        result = _validate_record(rec)
        if isinstance(result, str):
            n_rejected += 1
            logger.warning("line %d rejected: %s", lineno, result)
            continue
        if result.id in seen:
            n_rejected += 1
            logger.warning("line %d rejected: duplicate id %r", lineno, result.id)
            continue
        seen.add(result.id)
        docs.append(result)
    return Corpus(docs, n_rejected=n_rejected)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus:
            rec = {"id": d.id, "title": d.title, "body": d.body,
                   "pub_year": d.pub_year, "kind": d.kind}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def save_tokenized(corpus: TokenizedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus:
            rec = {"id": d.id, "tokens": list(d.tokens),
                   "pub_year": d.pub_year, "kind": d.kind}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_tokenized(path) -> TokenizedCorpus:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.append(TokenizedDocument(rec["id"], tuple(rec["tokens"]),
                                          rec["pub_year"], rec["kind"]))
    return TokenizedCorpus(docs)


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

def clean_and_tokenize(doc: Union[Document, str], stopwords: frozenset[str]) -> list[str]:
    """Lowercase, strip punctuation, Porter-stem, and drop stopwords.

    Non-alphanumeric characters are removed except hyphens inside a
    token. Stopwords are matched after stemming, so the stopword set
    must contain stems.
    """
    text = f"{doc.title} {doc.body}" if isinstance(doc, Document) else doc
    out: list[str] = []
    for raw in text.lower().split():
        tok = _STRIP_RE.sub("", raw).strip("-")
        if not tok:
            continue
        stemmed = stem(tok)
        if stemmed and stemmed not in stopwords:
            out.append(stemmed)
    return out


def tokenize_corpus(corpus: Corpus, stopwords: frozenset[str]) -> TokenizedCorpus:
    """Clean every document, preserving ids, years, and kinds."""
    docs = [
        TokenizedDocument(d.id, tuple(clean_and_tokenize(d, stopwords)), d.pub_year, d.kind)
        for d in corpus
    ]
    return TokenizedCorpus(docs)


# ---------------------------------------------------------------------------
# Phrase mining
# ---------------------------------------------------------------------------

def mine_phrases(corpus: TokenizedCorpus, max_n: int = 3, min_count: int = 5,
                 min_score: float = 0.0) -> PhraseVocabulary:
    """Collect n-grams (2..max_n) scored by pointwise mutual information.

    score = ln(count(gram) * T^(n-1) / prod(count(w_i))) with T the total
    unigram count. Grams below min_count or min_score are dropped. Output
    is deterministic and invariant under document reordering.
    """
    if max_n < 2:
        raise ValueError("max_n must be >= 2")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")

    unigram: Counter = Counter()
    gram_count: Counter = Counter()
    gram_docs: Counter = Counter()
    for doc in corpus:
        toks = doc.tokens
        unigram.update(toks)
        in_doc: set[tuple[str, ...]] = set()
        for n in range(2, max_n + 1):
            for i in range(len(toks) - n + 1):
                g = toks[i:i + n]
                gram_count[g] += 1
                in_doc.add(g)
        gram_docs.update(in_doc)

    total = sum(unigram.values())
    phrases: dict[tuple[str, ...], PhraseEntry] = {}
    for g, c in gram_count.items():
        if c < min_count:
            continue
        denom = 1.0
        for w in g:
            denom *= unigram[w]
        score = math.log(c * float(total) ** (len(g) - 1) / denom)
        if score >= min_score:
            phrases[g] = PhraseEntry(c, gram_docs[g], score)

    ordered = sorted(phrases.items(), key=lambda kv: (-kv[1].score, kv[0]))
    return PhraseVocabulary(dict(ordered))


def apply_phrases(corpus: TokenizedCorpus, vocab: PhraseVocabulary) -> TokenizedCorpus:
    """Merge mined phrases greedily, left to right, longest match first."""
    max_n = vocab.max_n()
    if max_n < 2:
        return TokenizedCorpus(corpus.docs)

    def merge(tokens: tuple[str, ...]) -> tuple[str, ...]:
        out = []
        i = 0
        ln = len(tokens)
        while i < ln:
            for n in range(min(max_n, ln - i), 1, -1):
                g = tokens[i:i + n]
                if g in vocab.phrases:
                    out.append(JOINER.join(g))
                    i += n
                    break
            else:
                out.append(tokens[i])
                i += 1
        return tuple(out)

    docs = [
        TokenizedDocument(d.id, merge(d.tokens), d.pub_year, d.kind)
        for d in corpus
    ]
    return TokenizedCorpus(docs)


def split_phrase(token: str) -> list[str]:
    """Recover the unigrams of a (possibly merged) token."""
    return token.split(JOINER)


def save_vocabulary(vocab: PhraseVocabulary, path) -> None:
    """Write phrases as TSV: ngram, count, doc_freq, score."""
    rows = sorted(vocab.phrases.items(), key=lambda kv: (-kv[1].score, kv[0]))
    with open(path, "w", encoding="utf-8") as fh:
        for g, e in rows:
            fh.write(f"{' '.join(g)}\t{e.corpus_count}\t{e.doc_frequency}\t{e.score!r}\n")


def load_vocabulary(path) -> PhraseVocabulary:
    phrases: dict[tuple[str, ...], PhraseEntry] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            gram, count, doc_freq, score = line.rstrip("\n").split("\t")
            phrases[tuple(gram.split(" "))] = PhraseEntry(int(count), int(doc_freq), float(score))
    return PhraseVocabulary(phrases)


# ---------------------------------------------------------------------------
# Statistics, filtering, sampling
# ---------------------------------------------------------------------------

def corpus_stats(corpus: TokenizedCorpus) -> CorpusStats:
    """Token totals plus the lower-middle median of per-document lengths."""
    if len(corpus) == 0:
        return CorpusStats(0, 0, 0, 0)
    lengths = sorted(len(d.tokens) for d in corpus)
    vocab: set[str] = set()
    total = 0
    for d in corpus:
        total += len(d.tokens)
        vocab.update(d.tokens)
    median = lengths[(len(lengths) - 1) // 2]
    return CorpusStats(total, len(vocab), len(corpus), median)


def stats_tsv(rows: list[tuple[str, CorpusStats]]) -> str:
    """Render named corpus statistics as a TSV table."""
    lines = ["corpus\ttotal_words\tunique_words\tcorpus_size\tmedian_words_per_doc"]
    for name, s in rows:
        lines.append(f"{name}\t{s.total_words}\t{s.unique_words}\t{s.corpus_size}\t{s.median_words_per_doc}")
    return "\n".join(lines) + "\n"


def cut_year_filter(corpus, cut_year: int):
    """Keep documents with pub_year <= cut_year."""
    kept = [d for d in corpus.docs if d.pub_year <= cut_year]
    return type(corpus)(kept)


def halve_sample(corpus, levels: int, seed: int) -> list:
    """Nested halves: the full corpus followed by `levels` samples, each
    drawn without replacement from the previous with ceil(n/2) documents.

    Sampled documents keep their original relative order. Deterministic
    for a fixed seed.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    rng = np.random.default_rng(seed)
    out = [type(corpus)(list(corpus.docs))]
    current = list(corpus.docs)
    for _ in range(levels):
        size = math.ceil(len(current) / 2)
        idx = np.sort(rng.choice(len(current), size=size, replace=False))
        current = [current[i] for i in idx]
        out.append(type(corpus)(list(current)))
    return out
