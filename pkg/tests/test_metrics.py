"""Tests for memt5.training.metrics module."""

import math

import numpy as np
import pytest

from memt5.exceptions import DataError
from memt5.training import normalize_answer, perplexity, qa_metrics, token_accuracy
from memt5.training.metrics import score_answer, token_hits


class TestPerplexity:
    @pytest.mark.parametrize(("loss", "ppl"), [(4.196, 66.43), (2.308, 10.054), (0.0, 1.0)])
    def test_reported_pairs(self, loss: float, ppl: float) -> None:
        assert perplexity(loss) == pytest.approx(ppl, rel=1e-3)

    def test_overflow_is_inf(self) -> None:
        assert perplexity(1e6) == math.inf

    def test_negative_loss(self) -> None:
        with pytest.raises(ValueError):
            perplexity(-0.1)


class TestTokenAccuracy:
    def test_ignores_masked_positions(self) -> None:
        logits = np.array([[[0.1, 0.9], [0.8, 0.2], [0.3, 0.7]]])
        targets = np.array([[1, 1, -100]])
        assert token_accuracy(logits, targets) == pytest.approx(50.0)
        assert token_hits(logits, targets) == (1, 2)

    def test_all_ignored(self) -> None:
        with pytest.raises(DataError):
            token_accuracy(np.zeros((1, 2, 3)), np.array([[-100, -100]]))


class TestNormalizeAnswer:
    @pytest.mark.parametrize(
        ("raw", "normalized"),
        [
            ("The  Eiffel Tower!", "eiffel tower"),
            ("an apple, a pear", "apple pear"),
            ("Theatre", "theatre"),
            ("  ", ""),
        ],
    )
    def test_normalization(self, raw: str, normalized: str) -> None:
        assert normalize_answer(raw) == normalized


class TestQAMetrics:
    def test_exact_match_after_normalization(self) -> None:
        score = score_answer("the Eiffel tower.", "Eiffel Tower")
        assert score.exact_match == 1.0
        assert score.f1 == 1.0

    def test_partial_overlap(self) -> None:
        score = score_answer("Eiffel", "Eiffel Tower")
        assert score.exact_match == 0.0
        assert score.precision == 1.0
        assert score.recall == 0.5
        assert score.f1 == pytest.approx(2 / 3)

    def test_no_overlap(self) -> None:
        score = score_answer("Louvre", "Eiffel Tower")
        assert (score.exact_match, score.f1, score.precision, score.recall) == (0, 0, 0, 0)

    def test_empty_reference(self) -> None:
        assert score_answer("", "the").f1 == 1.0
        assert score_answer("x", "a").f1 == 0.0

    def test_repeated_tokens_counted_once_per_match(self) -> None:
        score = score_answer("yes yes yes", "yes")
        assert score.precision == pytest.approx(1 / 3)
        assert score.recall == 1.0

    def test_means_are_percentages(self) -> None:
        metrics = qa_metrics(["Eiffel Tower", "Eiffel"], ["Eiffel Tower", "Eiffel Tower"])
        assert metrics["exact_match"] == pytest.approx(50.0)
        assert metrics["f1"] == pytest.approx(100 * (1 + 2 / 3) / 2)
        assert metrics["precision"] == pytest.approx(100.0)
        assert metrics["recall"] == pytest.approx(75.0)

    def test_length_mismatch(self) -> None:
        with pytest.raises(ValueError):
            qa_metrics(["a"], [])

    def test_empty(self) -> None:
        with pytest.raises(DataError):
            qa_metrics([], [])
