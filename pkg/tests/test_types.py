import pytest

from reranklab import (
    Candidate,
    Corpus,
    DecisionLogits,
    Judgment,
    Passage,
    Query,
    RunEntry,
    ScoredPair,
    ValidationError,
)
from reranklab.types import validate_candidate_list, validate_run


class TestConstructionInvariants:
    def test_query_requires_id_and_text(self):
        with pytest.raises(ValidationError):
            Query("", "text")
        with pytest.raises(ValidationError):
            Query("q1", "")

    def test_corpus_rejects_duplicate_ids(self):
        with pytest.raises(ValidationError, match="duplicate"):
            Corpus((Passage("p1", "a"), Passage("p1", "b")))

    def test_corpus_lookup(self):
        corpus = Corpus((Passage("p1", "a"), Passage("p2", "b")))
        assert corpus.size == 2
        assert "p1" in corpus
        assert corpus.passage("p2").text == "b"
        with pytest.raises(ValidationError):
            corpus.passage("p9")

    def test_decision_logits_must_be_finite(self):
        DecisionLogits(2.0, -3.0)
        with pytest.raises(ValidationError):
            DecisionLogits(float("nan"), 0.0)
        with pytest.raises(ValidationError):
            DecisionLogits(0.0, float("inf"))

    def test_judgment_rejects_negative_grade(self):
        with pytest.raises(ValidationError):
            Judgment("q1", "p1", -1)

    def test_scored_pair_score_range(self):
        ScoredPair("q1", "p1", 0.5)
        with pytest.raises(ValidationError):
            ScoredPair("q1", "p1", 1.5)
        with pytest.raises(ValidationError):
            ScoredPair("q1", "p1", 0.5, per_sample_scores=(0.2, -0.1))


class TestListInvariants:
    def test_candidate_ranks_contiguous(self):
        good = [
            Candidate("q1", "p1", 2.0, 1),
            Candidate("q1", "p2", 1.0, 2),
            Candidate("q2", "p1", 9.0, 1),
        ]
        validate_candidate_list(good)
        with pytest.raises(ValidationError, match="contiguous"):
            validate_candidate_list([Candidate("q1", "p1", 2.0, 2)])

    def test_candidate_scores_non_increasing(self):
        bad = [Candidate("q1", "p1", 1.0, 1), Candidate("q1", "p2", 2.0, 2)]
        with pytest.raises(ValidationError, match="score increases"):
            validate_candidate_list(bad)

    def test_run_invariants(self):
        validate_run(
            [RunEntry("q1", "p1", 1, 0.9, "t"), RunEntry("q1", "p2", 2, 0.4, "t")]
        )
        with pytest.raises(ValidationError):
            validate_run([RunEntry("q1", "p1", 1, 0.1, "t"), RunEntry("q1", "p2", 2, 0.4, "t")])

    def test_immutability(self):
        q = Query("q1", "text")
        with pytest.raises(AttributeError):
            q.text = "other"
