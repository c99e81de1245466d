import json
import random

import pytest

from reranklab import Corpus, Passage, Query

WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu anchor beacon cipher dynamo ember flux glacier harbor "
    "ion jade krypton lumen meridian nexus orbit prism quartz relay summit "
    "tundra umbra vertex wharf yield zephyr"
).split()


def make_corpus(n: int, seed: int = 7, min_len: int = 3, max_len: int = 12) -> Corpus:
    """Random-word passages, deterministic for a given seed."""
    rng = random.Random(seed)
    passages = []
    for i in range(n):
        words = rng.choices(WORDS, k=rng.randint(min_len, max_len))
        passages.append(Passage(f"p{i:04d}", " ".join(words)))
    return Corpus(tuple(passages))


def make_queries(n: int, seed: int = 11) -> list[Query]:
    rng = random.Random(seed)
    return [
        Query(f"q{i:02d}", " ".join(rng.choices(WORDS, k=rng.randint(2, 4))))
        for i in range(n)
    ]


def write_corpus_file(path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.passages:
            fh.write(json.dumps({"id": p.id, "text": p.text}) + "\n")


def write_queries_file(path, queries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"id": q.id, "text": q.text}) + "\n")


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus(
        (
            Passage("d1", "the cat sat on the mat"),
            Passage("d2", "a dog chased the cat"),
            Passage("d3", "quantum entanglement of photons"),
            Passage("d4", "the dog slept"),
            Passage("d5", "cat cat cat"),
        )
    )
