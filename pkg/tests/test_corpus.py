"""Tests for memt5.data.corpus module."""

import logging
from pathlib import Path

import numpy as np
import pytest

from memt5.data import iter_documents, load_text_corpus, pack_sequences, read_documents
from memt5.events import EVENT_CORPUS_LOADED
from memt5.exceptions import DataError
from memt5.tokenizer import EOS_ID, Vocab


class TestReadDocuments:
    def test_blank_lines_separate_documents(self, tmp_path: Path) -> None:
        path = tmp_path / "c.txt"
        path.write_text("first doc\nstill first\n\n  \nsecond\r\n\r\nthird\n", encoding="utf-8")
        assert read_documents(path) == ["first doc\nstill first", "second", "third"]

    def test_iterates_files_in_order(self, tmp_path: Path) -> None:
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        a.write_text("one\n\ntwo", encoding="utf-8")
        b.write_text("three", encoding="utf-8")
        assert list(iter_documents([a, b])) == ["one", "two", "three"]
        assert list(iter_documents(b)) == ["three"]

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(DataError, match="cannot read corpus"):
            read_documents(tmp_path / "absent.txt")

    def test_invalid_utf8(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.txt"
        path.write_bytes(b"\xff\xfe\xfa")
        with pytest.raises(DataError):
            read_documents(path)


class TestPackSequences:
    def test_drops_tail(self) -> None:
        packed = pack_sequences(list(range(10)), 4)
        np.testing.assert_array_equal(packed, [[0, 1, 2, 3], [4, 5, 6, 7]])

    def test_too_short_gives_no_rows(self) -> None:
        assert pack_sequences([1, 2], 4).shape == (0, 4)

    def test_invalid_length(self) -> None:
        with pytest.raises(ValueError):
            pack_sequences([1, 2], 0)


class TestLoadTextCorpus:
    def test_documents_end_with_eos(self, tmp_path: Path, byte_vocab: Vocab) -> None:
        path = tmp_path / "c.txt"
        path.write_text("ab\n\ncd", encoding="utf-8")
        sequences = load_text_corpus(path, byte_vocab, seq_len=3)
        expected = [*byte_vocab.encode("ab"), EOS_ID, *byte_vocab.encode("cd"), EOS_ID]
        np.testing.assert_array_equal(sequences.reshape(-1), expected)

    def test_logs_corpus_event(
        self, corpus_file: Path, byte_vocab: Vocab, caplog: pytest.LogCaptureFixture
    ) -> None:
        with caplog.at_level(logging.INFO, logger="memt5"):
            sequences = load_text_corpus(corpus_file, byte_vocab, seq_len=32)
        records = [r for r in caplog.records if getattr(r, "event", None) == EVENT_CORPUS_LOADED]
        assert len(records) == 1
        assert records[0].sequences == sequences.shape[0]
        assert records[0].documents == 9
        assert records[0].dropped_tokens < 32
