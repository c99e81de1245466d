"""Pointwise scoring strategies and candidate-list reranking.

Four strategies produce a relevance probability per (query, passage) pair:

* ``direct``            — one decision-logit read at the assistant turn.
* ``reason``            — generate a reasoning chain inside a think block,
                          then read the decision logits after it.
* ``forced_no_reason``  — pre-fill the think block with a fixed sentence so
                          the model must answer immediately; exactly one
                          scoring call per pair, no generation.
* ``self_consistency``  — n sampled reasoning chains; the pair's score is
                          the arithmetic mean of the n probabilities (not a
                          majority vote), which keeps the score continuous.

All strategies share the same logits-to-probability mapping; they differ
only in what the logits are conditioned on.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .backend import BackendError, CompletionsBackend, SamplingParams
from .prompts import PromptMode, PromptTemplate, assemble_prompt
from .types import (
    Candidate,
    Corpus,
    DecisionLogits,
    Passage,
    Query,
    RunEntry,
    ScoredPair,
    ValidationError,
)


class StrategyKind(str, Enum):
    DIRECT = "direct"
    REASON = "reason"
    FORCED_NO_REASON = "forced_no_reason"
    SELF_CONSISTENCY = "self_consistency"


@dataclass(frozen=True)
class RerankStrategy:
    kind: StrategyKind
    samples: int = 1
    max_passage_chars: int = 2048  # prompt-time truncation; 0 disables

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValidationError(f"samples must be >= 1, got {self.samples}")
        if self.samples > 1 and self.kind is not StrategyKind.SELF_CONSISTENCY:
            raise ValidationError(
                f"samples > 1 only applies to self_consistency, not {self.kind.value}"
            )


class PairScoringError(BackendError):
    """A backend failure annotated with the pair it belongs to."""

    def __init__(self, query_id: str, passage_id: str, cause: Exception):
        super().__init__(f"scoring failed for ({query_id!r}, {passage_id!r}): {cause}")
        self.query_id = query_id
        self.passage_id = passage_id
        self.cause = cause


def relevance_from_logits(logits: DecisionLogits) -> float:
    """Two-way softmax probability of the 'true' decision token.

    Computed in the shifted form sigmoid(z_true - z_false), which is exact
    for the two-token softmax and immune to overflow; invariant to adding
    any constant to both logits. The result is in (0, 1) mathematically,
    saturating to 0.0/1.0 only at float64 limits.
    """
    d = logits.true_logit - logits.false_logit
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def derive_seed(base_seed: int, query_id: str, passage_id: str, sample_index: int) -> int:
    """Deterministic, collision-resistant per-sample seed."""
    material = f"{base_seed}|{query_id}|{passage_id}|{sample_index}"
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # non-negative 63-bit


def _truncate(text: str, max_chars: int) -> str:
    if max_chars and len(text) > max_chars:
        return text[:max_chars]
    return text


def score_direct(
    backend: CompletionsBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    max_passage_chars: int = 2048,
) -> ScoredPair:
    """Single decision read with no reasoning (the plain pointwise scorer)."""
    prompt = assemble_prompt(
        template, query.text, _truncate(passage.text, max_passage_chars), PromptMode.DIRECT
    )
    logits = backend.score_decision(prompt)
    return ScoredPair(query.id, passage.id, relevance_from_logits(logits))


def score_reasoned(
    backend: CompletionsBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    sampling: SamplingParams,
    max_passage_chars: int = 2048,
) -> ScoredPair:
    """Generate reasoning, then read the decision conditioned on it."""
    prompt = assemble_prompt(
        template, query.text, _truncate(passage.text, max_passage_chars), PromptMode.OPEN_THINK
    )
    trace, logits = backend.generate_then_score(prompt, sampling, template.answer_scaffold)
    return ScoredPair(query.id, passage.id, relevance_from_logits(logits), traces=(trace,))


def score_forced(
    backend: CompletionsBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    max_passage_chars: int = 2048,
) -> ScoredPair:
    """Reasoning disabled: the think block is pre-filled, one scoring call."""
    prompt = assemble_prompt(
        template, query.text, _truncate(passage.text, max_passage_chars), PromptMode.FORCED_THINK
    )
    logits = backend.score_decision(prompt + template.answer_scaffold)
    return ScoredPair(query.id, passage.id, relevance_from_logits(logits))


def score_self_consistency(
    backend: CompletionsBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    sampling: SamplingParams,
    n: int,
    base_seed: int = 0,
    average_over_successes: bool = False,
    max_passage_chars: int = 2048,
) -> ScoredPair:
    """Mean of n sampled reasoning-conditioned scores.

    Per-sample seeds derive deterministically from (query_id, passage_id,
    sample index, base_seed), so reruns reproduce the same samples. By
    default any failing sample fails the whole pair; with
    ``average_over_successes`` the mean is taken over the samples that
    succeeded (their count is visible as len(per_sample_scores)).
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    traces = []
    per_sample = []
    failures = []
    for i in range(n):
        seeded = sampling.with_seed(derive_seed(base_seed, query.id, passage.id, i))
        try:
            pair = score_reasoned(backend, template, query, passage, seeded, max_passage_chars)
        except BackendError as exc:
            if not average_over_successes:
                raise
            failures.append(exc)
            continue
        traces.extend(pair.traces)
        per_sample.append(pair.score)
    if not per_sample:
        raise BackendError(f"all {n} samples failed; last error: {failures[-1]}")
    mean = math.fsum(per_sample) / len(per_sample)
    return ScoredPair(
        query.id,
        passage.id,
        mean,
        traces=tuple(traces),
        per_sample_scores=tuple(per_sample),
    )


def rerank(
    candidates: Sequence[Candidate],
    scores: Iterable[ScoredPair],
    tag: str,
    failed: frozenset[tuple[str, str]] = frozenset(),
) -> list[RunEntry]:
    """Reorder candidates by relevance score, descending.

    Ties break by ascending first-stage rank, then ascending passage id, so
    the output is invariant to the input candidate order. Pairs listed in
    ``failed`` (the allow-partial escape hatch) keep no score and sink to
    the bottom in first-stage order, with placeholder run scores below any
    real probability.
    """
    by_pair: dict[tuple[str, str], ScoredPair] = {}
    for s in scores:
        key = (s.query_id, s.passage_id)
        if key in by_pair:
            raise ValidationError(f"duplicate score for pair {key}")
        by_pair[key] = s

    by_query: dict[str, list[Candidate]] = {}
    for c in candidates:
        by_query.setdefault(c.query_id, []).append(c)

    entries: list[RunEntry] = []
    for qid in sorted(by_query):
        scored: list[tuple[float, Candidate]] = []
        fallback: list[Candidate] = []
        for c in by_query[qid]:
            key = (c.query_id, c.passage_id)
            if key in failed:
                fallback.append(c)
                continue
            if key not in by_pair:
                raise ValidationError(f"candidate {key} has no score")
            scored.append((by_pair[key].score, c))
        scored.sort(key=lambda item: (-item[0], item[1].first_stage_rank, item[1].passage_id))
        fallback.sort(key=lambda c: c.first_stage_rank)
        rank = 0
        for score, c in scored:
            rank += 1
            entries.append(RunEntry(qid, c.passage_id, rank, score, tag))
        for c in fallback:
            rank += 1
            entries.append(RunEntry(qid, c.passage_id, rank, -float(c.first_stage_rank), tag))
    return entries


@dataclass(frozen=True)
class PairFailure:
    query_id: str
    passage_id: str
    error: str


def score_candidates(
    backend: CompletionsBackend,
    template: PromptTemplate,
    strategy: RerankStrategy,
    queries: Mapping[str, Query],
    corpus: Corpus,
    candidates: Sequence[Candidate],
    sampling: SamplingParams,
    base_seed: int = 0,
    concurrency: int = 1,
    allow_partial: bool = False,
) -> tuple[list[ScoredPair], list[PairFailure]]:
    """Score every candidate pair, concurrently up to ``concurrency``.

    Results come back in candidate order regardless of thread scheduling,
    so a deterministic backend yields a deterministic output. Default error
    policy is fail-fast (a silent score gap would corrupt downstream metric
    comparisons); with ``allow_partial`` failed pairs are recorded and
    returned for first-stage fallback placement.
    """
    for c in candidates:
        if c.query_id not in queries:
            raise ValidationError(f"candidate references unknown query id {c.query_id!r}")
        if c.passage_id not in corpus:
            raise ValidationError(f"candidate references unknown passage id {c.passage_id!r}")

    def score_one(c: Candidate) -> ScoredPair:
        query = queries[c.query_id]
        passage = corpus.passage(c.passage_id)
        chars = strategy.max_passage_chars
        try:
            if strategy.kind is StrategyKind.DIRECT:
                return score_direct(backend, template, query, passage, chars)
            if strategy.kind is StrategyKind.FORCED_NO_REASON:
                return score_forced(backend, template, query, passage, chars)
            if strategy.kind is StrategyKind.REASON:
                seeded = sampling.with_seed(derive_seed(base_seed, query.id, passage.id, 0))
                return score_reasoned(backend, template, query, passage, seeded, chars)
            return score_self_consistency(
                backend,
                template,
                query,
                passage,
                sampling,
                n=strategy.samples,
                base_seed=base_seed,
                average_over_successes=allow_partial,
                max_passage_chars=chars,
            )
        except PairScoringError:
            raise
        except BackendError as exc:
            raise PairScoringError(c.query_id, c.passage_id, exc) from exc

    def attempt(c: Candidate) -> ScoredPair | PairFailure:
        try:
            return score_one(c)
        except PairScoringError as exc:
            if allow_partial:
                return PairFailure(exc.query_id, exc.passage_id, str(exc.cause))
            raise

    if concurrency <= 1:
        outcomes = [attempt(c) for c in candidates]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            outcomes = list(pool.map(attempt, candidates))

    scored: list[ScoredPair] = []
    failures: list[PairFailure] = []
    for out in outcomes:
        if isinstance(out, PairFailure):
            failures.append(out)
        else:
            scored.append(out)
    return scored, failures
