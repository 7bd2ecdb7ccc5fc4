"""Pytest fixtures for memt5 tests."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np
import pytest

from memt5.autograd import precision, set_debug_checks
from memt5.config import MIN_VOCAB_SIZE, ModelConfig, RunConfig, Variant
from memt5.settings import get_settings
from memt5.tokenizer import Vocab, train_tokenizer

CORPUS_TEXT = (
    "The memory tokens carry information between chunks of a long document.\n"
    "Each chunk attends to its own tokens and to the memory of every chunk.\n"
    "\n"
    "A decoder reads the memory states through a selector or directly.\n"
    "Span corruption replaces short spans of the input with sentinel tokens.\n"
    "\n"
    "Question answering needs the answer to appear inside the context paragraphs.\n"
)


@pytest.fixture(autouse=True)
def _isolated_environment(
    monkeypatch: pytest.MonkeyPatch, tmp_path_factory: pytest.TempPathFactory
) -> Iterator[None]:
    """Debug checks on, runs under a temp root, memt5 logger restored after each test."""
    for key in (
        "MEMT5_DETERMINISTIC",
        "MEMT5_DEBUG_CHECKS",
        "MEMT5_EVAL_WORKERS",
        "MEMT5_LOG_FORMAT",
        "MEMT5_LOG_FILE",
    ):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("MEMT5_OUTPUT_ROOT", str(tmp_path_factory.mktemp("runs")))
    get_settings.cache_clear()
    set_debug_checks(True)
    yield
    set_debug_checks(False)
    get_settings.cache_clear()
    memt5_logger = logging.getLogger("memt5")
    for handler in list(memt5_logger.handlers):
        memt5_logger.removeHandler(handler)
        handler.close()
    memt5_logger.propagate = True
    memt5_logger.setLevel(logging.NOTSET)


@pytest.fixture
def float64() -> Iterator[None]:
    """64-bit default precision for oracle and gradient tests."""
    with precision("float64"):
        yield


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def byte_vocab() -> Vocab:
    """Smallest legal vocabulary: bytes and specials only, no merges."""
    return Vocab(MIN_VOCAB_SIZE, [])


@pytest.fixture(scope="session")
def small_vocab() -> Vocab:
    return train_tokenizer([CORPUS_TEXT] * 3, vocab_size=MIN_VOCAB_SIZE + 40)


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    path = tmp_path / "corpus.txt"
    path.write_text(CORPUS_TEXT * 4, encoding="utf-8")
    return path


def tiny_model_config(variant: Variant = Variant.MEM, **overrides: object) -> ModelConfig:
    baseline = variant is Variant.BASELINE
    values: dict[str, object] = {
        "variant": variant,
        "vocab_size": MIN_VOCAB_SIZE,
        "d_model": 16,
        "num_heads": 2,
        "d_kv": 8,
        "d_ff": 32,
        "num_layers": 2,
        "dropout": 0.0,
        "n_chunks": 1 if baseline else 2,
        "chunk_len": 16 if baseline else 8,
        "mem_tokens": 0 if baseline else 1,
        "rel_pos_buckets": 8,
        "rel_pos_max_distance": 16,
    }
    values.update(overrides)
    return ModelConfig(**values)  # type: ignore[arg-type]


@pytest.fixture
def model_config_factory() -> Callable[..., ModelConfig]:
    return tiny_model_config


@pytest.fixture
def tiny_run(tmp_path: Path, corpus_file: Path, byte_vocab: Vocab) -> RunConfig:
    """MLM run on the byte vocabulary that finishes in seconds."""
    vocab_path = tmp_path / "vocab.txt"
    byte_vocab.save(vocab_path)
    return RunConfig(
        name="tiny",
        model=tiny_model_config(),
        train_path=corpus_file,
        valid_path=corpus_file,
        vocab_path=vocab_path,
        batch_size=4,
        epochs=1,
        output_dir=tmp_path / "run",
        seed=7,
    )
