"""Plain-text corpus loading.

A corpus file is UTF-8 text; blank lines separate documents. Documents are
tokenized in file order, each followed by ``</s>``, concatenated, and cut
into fixed-length training sequences. The tail that does not fill a whole
sequence is dropped.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterator, Sequence
from pathlib import Path

import numpy as np

from memt5.events import EVENT_CORPUS_LOADED
from memt5.exceptions import DataError
from memt5.tokenizer import EOS_ID, Vocab

logger = logging.getLogger(__name__)

_BLANK_LINES = re.compile(r"\n\s*\n")


def _as_paths(paths: Path | Sequence[Path]) -> list[Path]:
    return [paths] if isinstance(paths, Path) else list(paths)


def read_documents(path: Path) -> list[str]:
    """Split a corpus file into documents on blank lines."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    text = text.replace("\r\n", "\n")
    return [doc.strip() for doc in _BLANK_LINES.split(text) if doc.strip()]


def iter_documents(paths: Path | Sequence[Path]) -> Iterator[str]:
    for path in _as_paths(paths):
        yield from read_documents(path)


def pack_sequences(stream: Sequence[int] | np.ndarray, seq_len: int) -> np.ndarray:
    """Slice a token stream into ``[num_sequences, seq_len]``, dropping the tail."""
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    tokens = np.asarray(stream, dtype=np.int64)
    count = tokens.shape[0] // seq_len
    return tokens[: count * seq_len].reshape(count, seq_len)


def load_text_corpus(paths: Path | Sequence[Path], vocab: Vocab, seq_len: int) -> np.ndarray:
    """Tokenize corpus files into packed sequences of ``seq_len`` ids."""
    stream: list[int] = []
    documents = 0
    for document in iter_documents(paths):
        stream.extend(vocab.encode(document))
        stream.append(EOS_ID)
        documents += 1
    sequences = pack_sequences(stream, seq_len)
    logger.info(
        "corpus loaded",
        extra={
            "event": EVENT_CORPUS_LOADED,
            "paths": [str(p) for p in _as_paths(paths)],
            "documents": documents,
            "tokens": len(stream),
            "sequences": int(sequences.shape[0]),
            "dropped_tokens": len(stream) - int(sequences.size),
        },
    )
    return sequences
