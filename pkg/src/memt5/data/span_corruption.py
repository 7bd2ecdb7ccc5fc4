"""T5 span-corruption objective.

Given ``len`` tokens, ``noise = round(rate * len)`` of them are hidden in
``k = round(rate * len / mean_span_length)`` spans (capped by the sentinel
budget and by what fits). Span placement is a uniform random composition:

* the noise budget is split into ``k`` positive span lengths;
* the kept tokens are split into ``k + 1`` gaps, interior gaps at least one
  token long (spans never touch), the two edge gaps possibly empty.

Each span is replaced in the input by one sentinel, ``<extra_id_0>`` for the
first span, ``<extra_id_1>`` for the second and so on (so sentinel ids
descend), and the target lists every sentinel followed by the tokens it
hides, terminated by ``</s>``::

    tokens  t0 t1 t2 t3 t4 t5, span (start=2, length=2)
    input   t0 t1 <extra_id_0> t4 t5
    target  <extra_id_0> t2 t3 </s>
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from memt5.config import NUM_SENTINELS, SpanCorruptionConfig
from memt5.exceptions import DataError
from memt5.tokenizer import EOS_ID

Span = tuple[int, int]
"""``(start, length)`` of one corrupted span."""


@dataclass(frozen=True, slots=True)
class CorruptedExample:
    inputs: list[int]
    targets: list[int]
    spans: tuple[Span, ...]
    skipped: bool = False

    @property
    def noise_tokens(self) -> int:
        return sum(length for _, length in self.spans)


def _composition(rng: np.random.Generator, total: int, parts: int) -> np.ndarray:
    """Uniform random split of ``total`` into ``parts`` positive integers."""
    if parts == 1:
        return np.array([total], dtype=np.int64)
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [total]])).astype(np.int64)


def _gaps(rng: np.random.Generator, kept: int, spans: int) -> np.ndarray:
    """Split ``kept`` tokens into ``spans + 1`` gaps, interior gaps >= 1."""
    extra = kept - (spans - 1)
    bars = np.sort(rng.choice(extra + spans, size=spans, replace=False))
    edges = np.concatenate([[-1], bars, [extra + spans]])
    gaps = np.diff(edges) - 1
    gaps[1:-1] += 1
    return gaps.astype(np.int64)


def plan_spans(length: int, cfg: SpanCorruptionConfig, rng: np.random.Generator) -> list[Span]:
    """Sample non-overlapping, non-adjacent spans for a sequence of ``length`` tokens."""
    if length < 1:
        raise DataError("span corruption needs at least one token")
    noise = min(int(round(cfg.corruption_rate * length)), length - 1)
    wanted = int(round(cfg.corruption_rate * length / cfg.mean_span_length))
    kept = length - noise
    spans = min(wanted, cfg.max_sentinels, noise, kept + 1)
    if spans < 1:
        return []
    span_lengths = _composition(rng, noise, spans)
    gaps = _gaps(rng, kept, spans)
    planned: list[Span] = []
    position = int(gaps[0])
    for index in range(spans):
        planned.append((position, int(span_lengths[index])))
        position += int(span_lengths[index]) + int(gaps[index + 1])
    return planned


def apply_spans(
    tokens: Sequence[int], spans: Sequence[Span], vocab_size: int
) -> tuple[list[int], list[int]]:
    """Build ``(inputs, targets)`` for explicit spans.

    Raises:
        DataError: spans are out of order, overlap, touch, leave the
            sequence, or outnumber the sentinels
    """
    if len(spans) > NUM_SENTINELS:
        raise DataError(f"{len(spans)} spans exceed the {NUM_SENTINELS} available sentinels")
    inputs: list[int] = []
    targets: list[int] = []
    cursor = 0
    for k, (start, length) in enumerate(spans):
        if length < 1 or start < cursor or (k > 0 and start == cursor):
            raise DataError(f"span {k} ({start}, {length}) overlaps or touches the previous span")
        if start + length > len(tokens):
            raise DataError(f"span {k} ({start}, {length}) runs past {len(tokens)} tokens")
        sentinel = vocab_size - 1 - k
        inputs.extend(tokens[cursor:start])
        inputs.append(sentinel)
        targets.append(sentinel)
        targets.extend(tokens[start : start + length])
        cursor = start + length
    inputs.extend(tokens[cursor:])
    targets.append(EOS_ID)
    return [int(t) for t in inputs], [int(t) for t in targets]


def span_corrupt(
    tokens: Sequence[int],
    cfg: SpanCorruptionConfig,
    rng: np.random.Generator | int,
    vocab_size: int,
) -> CorruptedExample:
    """Corrupt ``tokens``; deterministic for a given seed or generator state.

    A sequence too short to hold a span comes back unchanged with an empty
    target and ``skipped=True``.
    """
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    spans = plan_spans(len(tokens), cfg, generator)
    if not spans:
        return CorruptedExample(inputs=[int(t) for t in tokens], targets=[], spans=(), skipped=True)
    inputs, targets = apply_spans(tokens, spans, vocab_size)
    return CorruptedExample(inputs=inputs, targets=targets, spans=tuple(spans))
