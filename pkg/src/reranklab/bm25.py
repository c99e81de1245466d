"""First-stage retrieval: inverted index with Okapi BM25 scoring.

Scores use the non-negative IDF variant ln(1 + (N - df + 0.5)/(df + 0.5)),
so every score is >= 0 and small test corpora cannot produce negative-score
rank pathologies. Default parameters are k1=0.9, b=0.4.

The index is immutable once built; queries may be evaluated concurrently
without coordination. Top-k retrieval scores every matching document and
sorts, which is exact (no pruning) and plenty fast at desk scale.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from .porter import porter_stem
from .types import Candidate, Corpus, Query, ValidationError

INDEX_FORMAT = "reranklab-bm25-index"
INDEX_VERSION = 1

_STEMMERS = ("none", "porter")


@dataclass(frozen=True)
class AnalyzerConfig:
    """Deterministic text-to-token rules shared by indexing and querying."""

    lowercase: bool = True
    token_pattern: str = r"[^\W_]+"  # runs of alphanumerics
    stopwords: frozenset[str] | None = None
    stemmer: str = "none"

    def __post_init__(self) -> None:
        if self.stemmer not in _STEMMERS:
            raise ValidationError(f"stemmer must be one of {_STEMMERS}, got {self.stemmer!r}")
        try:
            re.compile(self.token_pattern)
        except re.error as exc:
            raise ValidationError(f"invalid token pattern {self.token_pattern!r}: {exc}") from exc


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValidationError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValidationError(f"b must be in [0, 1], got {self.b}")


def tokenize(text: str, cfg: AnalyzerConfig) -> list[str]:
    if cfg.lowercase:
        text = text.lower()
    tokens = re.findall(cfg.token_pattern, text)
    if cfg.stopwords:
        tokens = [t for t in tokens if t not in cfg.stopwords]
    if cfg.stemmer == "porter":
        tokens = [porter_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class InvertedIndex:
    doc_ids: tuple[str, ...]
    doc_lengths: tuple[int, ...]
    postings: dict[str, tuple[tuple[int, int], ...]]  # term -> ((ordinal, tf), ...)
    analyzer: AnalyzerConfig
    params: Bm25Params
    avg_doc_length: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.doc_ids:
            raise ValidationError("index must contain at least one document")
        object.__setattr__(
            self, "avg_doc_length", sum(self.doc_lengths) / len(self.doc_lengths)
        )

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    def _idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def build_index(corpus: Corpus, cfg: AnalyzerConfig, params: Bm25Params) -> InvertedIndex:
    """Build an immutable inverted index over ``corpus``.

    Rebuilding from the same inputs produces an identical index (and an
    identical persisted file).
    """
    if corpus.size == 0:
        raise ValidationError("cannot index an empty corpus")
    doc_ids = []
    doc_lengths = []
    accumulating: dict[str, list[tuple[int, int]]] = {}
    for ordinal, passage in enumerate(corpus.passages):
        tokens = tokenize(passage.text, cfg)
        doc_ids.append(passage.id)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term in sorted(counts):
            accumulating.setdefault(term, []).append((ordinal, counts[term]))
    postings = {term: tuple(rows) for term, rows in sorted(accumulating.items())}
    return InvertedIndex(
        doc_ids=tuple(doc_ids),
        doc_lengths=tuple(doc_lengths),
        postings=postings,
        analyzer=cfg,
        params=params,
    )


def bm25_score(index: InvertedIndex, query: Query, ordinal: int) -> float:
    """Score one document against the query.

    Sum over query token occurrences of idf(t) * tf*(k1+1) / (tf + k1*norm)
    with norm = 1 - b + b*dl/avgdl. Terms absent from the document (or the
    index) contribute 0.
    """
    if not 0 <= ordinal < index.doc_count:
        raise ValidationError(f"ordinal {ordinal} out of range 0..{index.doc_count - 1}")
    k1, b = index.params.k1, index.params.b
    norm = 1.0 - b + b * index.doc_lengths[ordinal] / index.avg_doc_length
    score = 0.0
    for term in tokenize(query.text, index.analyzer):
        rows = index.postings.get(term)
        if not rows:
            continue
        tf = 0
        for doc, freq in rows:
            if doc == ordinal:
                tf = freq
                break
        if tf == 0:
            continue
        score += index._idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm)
    return score


def retrieve_top_k(index: InvertedIndex, query: Query, k: int) -> list[Candidate]:
    """Exact top-k candidates, scores descending, ties by ascending id.

    Only documents matching at least one query term are candidates, so fewer
    than k results may come back.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    k1, b = index.params.k1, index.params.b
    avgdl = index.avg_doc_length
    # term-at-a-time accumulation in query-token order: float summation order
    # matches bm25_score exactly, so the two paths agree bit-for-bit
    scores: dict[int, float] = {}
    for term in tokenize(query.text, index.analyzer):
        rows = index.postings.get(term)
        if not rows:
            continue
        idf = index._idf(term)
        for ordinal, tf in rows:
            norm = 1.0 - b + b * index.doc_lengths[ordinal] / avgdl
            contribution = idf * tf * (k1 + 1.0) / (tf + k1 * norm)
            scores[ordinal] = scores.get(ordinal, 0.0) + contribution
    ranked = sorted(scores.items(), key=lambda item: (-item[1], index.doc_ids[item[0]]))
    return [
        Candidate(
            query_id=query.id,
            passage_id=index.doc_ids[ordinal],
            first_stage_score=score,
            first_stage_rank=rank,
        )
        for rank, (ordinal, score) in enumerate(ranked[:k], start=1)
    ]


def save_index(index: InvertedIndex, path: str) -> None:
    """Persist as a single self-describing JSON file with a version header."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "analyzer": {
            "lowercase": index.analyzer.lowercase,
            "token_pattern": index.analyzer.token_pattern,
            "stopwords": sorted(index.analyzer.stopwords) if index.analyzer.stopwords else None,
            "stemmer": index.analyzer.stemmer,
        },
        "params": {"k1": index.params.k1, "b": index.params.b},
        "doc_ids": list(index.doc_ids),
        "doc_lengths": list(index.doc_lengths),
        "postings": {term: [list(row) for row in rows] for term, rows in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load_index(path: str) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT:
        raise ValidationError(f"{path}: not a {INDEX_FORMAT} file")
    if payload.get("version") != INDEX_VERSION:
        raise ValidationError(
            f"{path}: unsupported index version {payload.get('version')!r}"
        )
    analyzer_raw = payload["analyzer"]
    analyzer = AnalyzerConfig(
        lowercase=analyzer_raw["lowercase"],
        token_pattern=analyzer_raw["token_pattern"],
        stopwords=frozenset(analyzer_raw["stopwords"]) if analyzer_raw["stopwords"] else None,
        stemmer=analyzer_raw["stemmer"],
    )
    return InvertedIndex(
        doc_ids=tuple(payload["doc_ids"]),
        doc_lengths=tuple(payload["doc_lengths"]),
        postings={
            term: tuple((int(doc), int(tf)) for doc, tf in rows)
            for term, rows in payload["postings"].items()
        },
        analyzer=analyzer,
        params=Bm25Params(**payload["params"]),
    )
