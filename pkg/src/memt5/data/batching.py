"""Datasets and batch assembly for both tasks.

A :class:`Batch` is what the training loop and evaluation consume: a chunked
source, labels padded with ``-100`` and, for QA, the reference answers used
by the exact-match/F1 metrics.

MLM examples are corrupted on the fly. The corruption of example ``i`` in
epoch ``e`` draws from ``default_rng((seed, e, i))``, so any batch can be
rebuilt exactly (resume skips consumed batches without replaying them).

Example:
    dataset = MLMDataset(sequences, run.model, run.span_corruption, seed=run.seed)
    for indices in epoch_batches(len(dataset), run.batch_size, seed=run.seed, epoch=0):
        batch = dataset.batch(indices, epoch=0)
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from memt5.config import ModelConfig, SpanCorruptionConfig
from memt5.data.qa import QAExample
from memt5.data.span_corruption import CorruptedExample, span_corrupt
from memt5.exceptions import DataError
from memt5.model.memory import ChunkedBatch, chunk_sequences
from memt5.model.seq2seq import IGNORE_INDEX
from memt5.tokenizer import PAD_ID


@dataclass(frozen=True, slots=True)
class Batch:
    source: ChunkedBatch
    labels: np.ndarray
    references: tuple[str, ...] = field(default=())
    ids: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return self.source.batch_size

    @property
    def target_tokens(self) -> int:
        """Label positions that count toward the loss."""
        return int((self.labels != IGNORE_INDEX).sum())

    def split(self, parts: int) -> list[Batch]:
        """Row-wise micro-batches; empty parts are dropped."""
        pieces = []
        for rows in np.array_split(np.arange(len(self)), parts):
            if rows.size == 0:
                continue
            pieces.append(
                Batch(
                    source=self.source.select(rows),
                    labels=self.labels[rows],
                    references=tuple(self.references[r] for r in rows) if self.references else (),
                    ids=tuple(self.ids[r] for r in rows) if self.ids else (),
                )
            )
        return pieces


def pad_labels(targets: Sequence[Sequence[int]], length: int | None = None) -> np.ndarray:
    """Right-pad target id lists with ``-100`` to ``length`` (default: the longest)."""
    width = max((len(t) for t in targets), default=0) if length is None else length
    labels = np.full((len(targets), width), IGNORE_INDEX, dtype=np.int64)
    for row, target in enumerate(targets):
        if len(target) > width:
            raise DataError(f"target of {len(target)} tokens exceeds label width {width}")
        labels[row, : len(target)] = target
    return labels


class Dataset(Protocol):
    def __len__(self) -> int: ...

    def batch(self, indices: Sequence[int] | np.ndarray, epoch: int = 0) -> Batch: ...


class MLMDataset:
    """Packed token sequences, span-corrupted per ``(seed, epoch, index)``."""

    def __init__(
        self,
        sequences: np.ndarray,
        model: ModelConfig,
        span_corruption: SpanCorruptionConfig,
        seed: int = 42,
    ) -> None:
        if sequences.ndim != 2:
            raise DataError(f"expected [num_sequences, seq_len] sequences, got {sequences.shape}")
        if sequences.shape[0] and sequences.shape[1] > model.source_len:
            raise DataError(
                f"sequence length {sequences.shape[1]} exceeds source capacity {model.source_len}"
            )
        self.sequences = sequences
        self.model = model
        self.span_corruption = span_corruption
        self.seed = seed

    def __len__(self) -> int:
        return int(self.sequences.shape[0])

    def example(self, index: int, epoch: int = 0) -> CorruptedExample:
        rng = np.random.default_rng((self.seed, epoch, index))
        return span_corrupt(
            self.sequences[index].tolist(), self.span_corruption, rng, self.model.vocab_size
        )

    def batch(self, indices: Sequence[int] | np.ndarray, epoch: int = 0) -> Batch:
        examples = [self.example(int(i), epoch) for i in indices]
        kept = [ex for ex in examples if not ex.skipped]
        if not kept:
            raise DataError(
                f"no span fits sequences of {self.sequences.shape[1]} tokens at "
                f"corruption_rate={self.span_corruption.corruption_rate}"
            )
        source = chunk_sequences(
            [ex.inputs for ex in kept],
            self.model.chunk_len,
            self.model.n_chunks,
            pad_id=PAD_ID,
        )
        return Batch(source=source, labels=pad_labels([ex.targets for ex in kept]))


class QADataset:
    """Pre-built QA examples; batches carry the reference answers."""

    def __init__(self, examples: Sequence[QAExample], target_len: int = 40) -> None:
        self.examples = list(examples)
        self.target_len = target_len

    def __len__(self) -> int:
        return len(self.examples)

    def batch(self, indices: Sequence[int] | np.ndarray, epoch: int = 0) -> Batch:
        chosen = [self.examples[int(i)] for i in indices]
        if not chosen:
            raise DataError("empty QA batch")
        return Batch(
            source=ChunkedBatch.stack([ex.source for ex in chosen]),
            labels=pad_labels([ex.target for ex in chosen]),
            references=tuple(ex.answer for ex in chosen),
            ids=tuple(ex.record_id for ex in chosen),
        )


def epoch_batches(
    size: int, batch_size: int, seed: int = 42, epoch: int = 0, shuffle: bool = True
) -> list[np.ndarray]:
    """Index arrays for one epoch; the last batch may be short.

    The permutation for epoch ``e`` comes from ``default_rng(seed + e)``.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = (
        np.random.default_rng(seed + epoch).permutation(size)
        if shuffle
        else np.arange(size, dtype=np.int64)
    )
    return [order[start : start + batch_size] for start in range(0, size, batch_size)]
