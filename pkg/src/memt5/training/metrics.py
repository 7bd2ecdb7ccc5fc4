"""Evaluation metrics: perplexity, token accuracy and SQuAD-style QA scores."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from memt5.exceptions import DataError
from memt5.model.seq2seq import IGNORE_INDEX

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCTUATION = frozenset(string.punctuation)


def perplexity(mean_loss: float) -> float:
    """``exp(mean_loss)``; overflows to ``inf`` instead of raising."""
    if mean_loss < 0:
        raise ValueError(f"mean token cross-entropy must be >= 0, got {mean_loss}")
    try:
        return math.exp(mean_loss)
    except OverflowError:
        return math.inf


def token_accuracy(
    logits: np.ndarray, targets: np.ndarray, ignore_index: int = IGNORE_INDEX
) -> float:
    """Percent of non-ignored positions whose argmax equals the target."""
    correct, counted = token_hits(logits, targets, ignore_index)
    if counted == 0:
        raise DataError("token accuracy is undefined when every position is ignored")
    return 100.0 * correct / counted


def token_hits(
    logits: np.ndarray, targets: np.ndarray, ignore_index: int = IGNORE_INDEX
) -> tuple[int, int]:
    """``(correct, counted)`` so accuracy can be pooled across batches."""
    targets = np.asarray(targets)
    keep = targets != ignore_index
    predicted = np.argmax(np.asarray(logits), axis=-1)
    return int((predicted[keep] == targets[keep]).sum()), int(keep.sum())


# ----- question answering ----------------------------------------------------


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = "".join(ch for ch in text.lower() if ch not in _PUNCTUATION)
    return " ".join(_ARTICLES.sub(" ", text).split())


@dataclass(frozen=True, slots=True)
class AnswerScore:
    exact_match: float
    f1: float
    precision: float
    recall: float


def score_answer(prediction: str, reference: str) -> AnswerScore:
    pred_tokens = normalize_answer(prediction).split()
    ref_tokens = normalize_answer(reference).split()
    if not ref_tokens:
        both_empty = float(not pred_tokens)
        return AnswerScore(both_empty, both_empty, both_empty, both_empty)
    exact = float(pred_tokens == ref_tokens)
    common = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
    if common == 0:
        return AnswerScore(exact, 0.0, 0.0, 0.0)
    precision = common / len(pred_tokens)
    recall = common / len(ref_tokens)
    return AnswerScore(exact, 2 * precision * recall / (precision + recall), precision, recall)


def qa_metrics(predictions: Sequence[str], references: Sequence[str]) -> dict[str, float]:
    """Mean ``exact_match``, ``f1``, ``precision`` and ``recall`` over examples, x100."""
    if len(predictions) != len(references):
        raise ValueError(
            f"{len(predictions)} predictions for {len(references)} references"
        )
    if not predictions:
        raise DataError("qa_metrics needs at least one example")
    scores = [asdict(score_answer(p, r)) for p, r in zip(predictions, references, strict=True)]
    return {
        key: 100.0 * sum(s[key] for s in scores) / len(scores)
        for key in ("exact_match", "f1", "precision", "recall")
    }
