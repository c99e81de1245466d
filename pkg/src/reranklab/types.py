"""Shared domain types for the retrieval and reranking pipeline.

Everything here is immutable after construction and safe to share across
threads. Ids are opaque strings; no numeric parsing is ever applied to them.
Relevance scores are plain floats in [0, 1], validated where they are
constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence


class ValidationError(ValueError):
    """Raised when input data violates a structural invariant."""


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("query id must be non-empty")
        if not self.text:
            raise ValidationError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Passage:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("passage id must be non-empty")


@dataclass(frozen=True)
class Corpus:
    """An ordered, id-unique collection of passages."""

    passages: tuple[Passage, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for p in self.passages:
            if p.id in seen:
                raise ValidationError(f"duplicate passage id {p.id!r}")
            seen.add(p.id)

    @property
    def size(self) -> int:
        return len(self.passages)

    @cached_property
    def _by_id(self) -> dict[str, Passage]:
        return {p.id: p for p in self.passages}

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._by_id

    def passage(self, passage_id: str) -> Passage:
        try:
            return self._by_id[passage_id]
        except KeyError:
            raise ValidationError(f"unknown passage id {passage_id!r}") from None

    @classmethod
    def from_passages(cls, passages: Sequence[Passage]) -> "Corpus":
        return cls(tuple(passages))


@dataclass(frozen=True)
class Candidate:
    """One first-stage retrieval result for a query."""

    query_id: str
    passage_id: str
    first_stage_score: float
    first_stage_rank: int

    def __post_init__(self) -> None:
        if self.first_stage_rank < 1:
            raise ValidationError(
                f"rank must be >= 1, got {self.first_stage_rank} "
                f"for ({self.query_id!r}, {self.passage_id!r})"
            )


def validate_candidate_list(candidates: Sequence[Candidate]) -> None:
    """Check per-query rank/score invariants over a full candidate list.

    Within one query, ranks must form 1..k with no gaps and scores must be
    non-increasing with rank.
    """
    by_query: dict[str, list[Candidate]] = {}
    for c in candidates:
        by_query.setdefault(c.query_id, []).append(c)
    for qid, group in by_query.items():
        group = sorted(group, key=lambda c: c.first_stage_rank)
        ranks = [c.first_stage_rank for c in group]
        if ranks != list(range(1, len(group) + 1)):
            raise ValidationError(f"query {qid!r}: ranks are not contiguous 1..k: {ranks}")
        for earlier, later in zip(group, group[1:]):
            if later.first_stage_score > earlier.first_stage_score:
                raise ValidationError(
                    f"query {qid!r}: score increases from rank "
                    f"{earlier.first_stage_rank} to {later.first_stage_rank}"
                )


@dataclass(frozen=True)
class DecisionLogits:
    """Log-scale model scores for the two decision tokens at one position."""

    true_logit: float
    false_logit: float

    def __post_init__(self) -> None:
        for name, v in (("true_logit", self.true_logit), ("false_logit", self.false_logit)):
            if v != v or v in (float("inf"), float("-inf")):
                raise ValidationError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class ReasoningTrace:
    """A generated reasoning continuation.

    ``text`` never contains the end-of-think marker; ``terminated`` records
    whether the marker was actually produced (False means the token budget
    ran out first).
    """

    text: str
    terminated: bool
    token_count: int


@dataclass(frozen=True)
class Judgment:
    query_id: str
    passage_id: str
    grade: int

    def __post_init__(self) -> None:
        if self.grade < 0:
            raise ValidationError(
                f"grade must be >= 0, got {self.grade} "
                f"for ({self.query_id!r}, {self.passage_id!r})"
            )


# qid -> {passage_id -> grade}; built by data.load_qrels, at most one grade per pair
JudgmentMap = dict[str, dict[str, int]]


@dataclass(frozen=True)
class RunEntry:
    """One row of a ranked retrieval run."""

    query_id: str
    passage_id: str
    rank: int
    score: float
    tag: str

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")


def validate_run(entries: Sequence[RunEntry]) -> None:
    """Within each query: ranks 1..m without gaps, scores non-increasing."""
    by_query: dict[str, list[RunEntry]] = {}
    for e in entries:
        by_query.setdefault(e.query_id, []).append(e)
    for qid, group in by_query.items():
        group = sorted(group, key=lambda e: e.rank)
        ranks = [e.rank for e in group]
        if ranks != list(range(1, len(group) + 1)):
            raise ValidationError(f"query {qid!r}: run ranks are not contiguous 1..m: {ranks}")
        for earlier, later in zip(group, group[1:]):
            if later.score > earlier.score:
                raise ValidationError(
                    f"query {qid!r}: run score increases from rank {earlier.rank} to {later.rank}"
                )


@dataclass(frozen=True)
class ScoredPair:
    """The relevance score a strategy assigned to one (query, passage) pair.

    ``traces`` is empty for strategies that never generate reasoning.
    ``per_sample_scores`` is populated only by self-consistency; when present
    the aggregate ``score`` equals the arithmetic mean of the samples.
    """

    query_id: str
    passage_id: str
    score: float
    traces: tuple[ReasoningTrace, ...] = ()
    per_sample_scores: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                f"relevance score must be in [0, 1], got {self.score} "
                f"for ({self.query_id!r}, {self.passage_id!r})"
            )
        for s in self.per_sample_scores:
            if not 0.0 <= s <= 1.0:
                raise ValidationError(f"per-sample score {s} out of [0, 1]")
        if self.per_sample_scores:
            mean = math.fsum(self.per_sample_scores) / len(self.per_sample_scores)
            if abs(self.score - mean) > 1e-12:
                raise ValidationError(
                    f"score {self.score} is not the mean of per-sample scores ({mean})"
                )
