import json
import random

import pytest

from hypnet.corpus import Corpus, Document, TokenizedCorpus, TokenizedDocument


def make_doc(i, year=2010, kind="abstract", title=None, body=None):
    return Document(
        id=f"d{i:05d}",
        title=title if title is not None else f"title {i}",
        body=body if body is not None else f"body text number {i}",
        pub_year=year,
        kind=kind,
    )


def make_tokdoc(i, tokens, year=2010, kind="abstract"):
    return TokenizedDocument(f"d{i:05d}", tuple(tokens), year, kind)


@pytest.fixture(scope="session")
def fixture_10k(tmp_path_factory):
    """A synthetic 10,000-record JSONL corpus file."""
    rng = random.Random(20240501)
    words = [f"term{j:03d}" for j in range(400)]
    path = tmp_path_factory.mktemp("fixtures") / "corpus10k.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(10_000):
            body = " ".join(rng.choices(words, k=rng.randint(4, 24)))
            rec = {
                "id": f"p{i:06d}",
                "title": f"synthetic record {i}",
                "body": body,
                "pub_year": rng.randint(1990, 2020),
                "kind": "abstract" if rng.random() < 0.8 else "full_text",
            }
            fh.write(json.dumps(rec) + "\n")
    return path
