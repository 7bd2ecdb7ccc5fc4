"""Tests for memt5.data.qa module."""

import json
from pathlib import Path
from typing import Any

import pytest

from memt5.data import QARecord, build_qa_example, flatten_context, load_qa_dataset
from memt5.exceptions import CapacityError, ConfigurationError, DataError, SchemaValidationError
from memt5.tokenizer import EOS_ID, PAD_ID, Vocab


def _record(**overrides: Any) -> dict[str, Any]:
    record: dict[str, Any] = {
        "id": "q1",
        "question": "Who?",
        "answer": "Ada",
        "type": "bridge",
        "level": "easy",
        "supporting_facts": [["T", 0]],
        "context": [["Title A", ["Ada wrote notes. ", "She was first."]], ["Title B", ["Yes."]]],
    }
    record.update(overrides)
    return record


class TestQARecord:
    def test_titles_are_dropped(self) -> None:
        record = QARecord.model_validate(_record())
        assert record.context == [["Ada wrote notes. ", "She was first."], ["Yes."]]
        assert flatten_context(record) == "Ada wrote notes. She was first. Yes."

    def test_plain_paragraphs_accepted(self) -> None:
        record = QARecord.model_validate(_record(context=[["One.", "Two."], ["Three."]]))
        assert flatten_context(record) == "One. Two. Three."

    def test_integer_id_coerced(self) -> None:
        assert QARecord.model_validate(_record(id=7)).id == "7"

    def test_missing_field(self) -> None:
        raw = _record()
        del raw["answer"]
        with pytest.raises(ValueError):
            QARecord.model_validate(raw)


class TestLoadQADataset:
    def test_json_lines(self, tmp_path: Path) -> None:
        path = tmp_path / "qa.jsonl"
        lines = [json.dumps(_record(id="a")), "", json.dumps(_record(id="b"))]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert [r.id for r in load_qa_dataset(path)] == ["a", "b"]

    def test_json_array(self, tmp_path: Path) -> None:
        path = tmp_path / "qa.json"
        path.write_text(json.dumps([_record(id="a"), _record(id="b")]), encoding="utf-8")
        assert len(load_qa_dataset(path)) == 2

    def test_bad_json_line_reports_line(self, tmp_path: Path) -> None:
        path = tmp_path / "qa.jsonl"
        path.write_text(json.dumps(_record()) + "\n{oops\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2:"):
            load_qa_dataset(path)

    def test_schema_error_names_record_and_field(self, tmp_path: Path) -> None:
        path = tmp_path / "qa.jsonl"
        path.write_text(json.dumps(_record(id="broken", context="nope")) + "\n", encoding="utf-8")
        with pytest.raises(SchemaValidationError, match="'broken'.*'context'"):
            load_qa_dataset(path)

    def test_non_object_record(self, tmp_path: Path) -> None:
        path = tmp_path / "qa.jsonl"
        path.write_text("[1]\n", encoding="utf-8")
        with pytest.raises(SchemaValidationError, match="JSON object"):
            load_qa_dataset(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(DataError, match="cannot read"):
            load_qa_dataset(tmp_path / "absent.jsonl")


class TestBuildQAExample:
    def test_layout(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record(context=[["ctx"]]))
        example = build_qa_example(record, byte_vocab, source_len=16, target_len=8, n_chunks=2)
        flat = example.source.ids.reshape(-1).tolist()
        expected = [*byte_vocab.encode("Who?"), EOS_ID, *byte_vocab.encode("ctx"), EOS_ID]
        assert flat[: len(expected)] == expected
        assert set(flat[len(expected) :]) == {PAD_ID}
        assert example.source.ids.shape == (1, 2, 8)
        assert example.target == [*byte_vocab.encode("Ada"), EOS_ID]
        assert example.answer == "Ada"
        assert example.record_id == "q1"

    def test_context_truncated_from_tail(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record(context=[["abcdefghijklmnop"]]))
        example = build_qa_example(record, byte_vocab, source_len=12, n_chunks=1)
        flat = example.source.ids.reshape(-1).tolist()
        assert flat == [*byte_vocab.encode("Who?"), EOS_ID, *byte_vocab.encode("abcdef"), EOS_ID]
        assert example.source.pad_mask.all()

    def test_answer_truncated_to_keep_eos(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record(answer="Paris"))
        example = build_qa_example(record, byte_vocab, source_len=64, target_len=3)
        assert example.target == [*byte_vocab.encode("Pa"), EOS_ID]

    def test_question_too_long(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record(question="x" * 20))
        with pytest.raises(CapacityError, match="'q1'"):
            build_qa_example(record, byte_vocab, source_len=16)

    def test_empty_question(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record(question="   "))
        with pytest.raises(SchemaValidationError, match="question"):
            build_qa_example(record, byte_vocab, source_len=16)

    def test_capacity_must_divide(self, byte_vocab: Vocab) -> None:
        record = QARecord.model_validate(_record())
        with pytest.raises(ConfigurationError):
            build_qa_example(record, byte_vocab, source_len=10, n_chunks=3)
