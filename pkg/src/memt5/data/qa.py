"""Question-answering records and seq2seq example construction.

Input files are JSON lines, one record per line, with the HotpotQA field
names (``id``, ``question``, ``answer``, ``type``, ``level``,
``supporting_facts``, ``context``). A single JSON array of such records is
accepted as well. ``context`` is a list of paragraphs, each a list of
sentences; HotpotQA's ``[title, sentences]`` pairs are accepted and the title
is dropped. Supporting facts are carried but never used.

Source layout: ``question </s> context </s>``, truncated from the context
tail to the encoder capacity, then chunked. Target: ``answer </s>`` with the
answer truncated so that the ``</s>`` always fits in ``target_len``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from memt5.events import EVENT_QA_DATASET_LOADED
from memt5.exceptions import CapacityError, ConfigurationError, DataError, SchemaValidationError
from memt5.model.memory import ChunkedBatch, chunk_input
from memt5.tokenizer import EOS_ID, PAD_ID, Vocab

logger = logging.getLogger(__name__)


class QARecord(BaseModel):
    """One question with its distractor-setting context."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str = Field(min_length=1)
    question: str
    answer: str
    type: str = ""
    level: str = ""
    supporting_facts: Any = None
    context: list[list[str]]

    @field_validator("id", mode="before")
    @classmethod
    def _coerce_id(cls, value: Any) -> Any:
        return str(value) if isinstance(value, int) else value

    @field_validator("context", mode="before")
    @classmethod
    def _drop_titles(cls, value: Any) -> Any:
        if not isinstance(value, list):
            return value
        paragraphs = []
        for paragraph in value:
            if (
                isinstance(paragraph, list)
                and len(paragraph) == 2
                and isinstance(paragraph[0], str)
                and isinstance(paragraph[1], list)
            ):
                paragraphs.append(paragraph[1])
            else:
                paragraphs.append(paragraph)
        return paragraphs


def flatten_context(record: QARecord) -> str:
    """Join sentences within a paragraph, then paragraphs, with single spaces."""
    paragraphs = (" ".join(s.strip() for s in para if s.strip()) for para in record.context)
    return " ".join(p for p in paragraphs if p)


def _parse_record(raw: Any, where: str) -> QARecord:
    if not isinstance(raw, dict):
        raise SchemaValidationError(f"{where}: record must be a JSON object")
    try:
        return QARecord.model_validate(raw)
    except ValidationError as exc:
        record_id = raw.get("id", "<missing>")
        error = exc.errors()[0]
        field = ".".join(str(p) for p in error["loc"]) or "<record>"
        raise SchemaValidationError(
            f"{where}: record {record_id!r} field {field!r}: {error['msg']}"
        ) from None


def load_qa_dataset(path: Path) -> list[QARecord]:
    """Read and validate every record of a JSON-lines (or JSON array) QA file."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read QA dataset {path}: {exc}") from exc

    records: list[QARecord] = []
    if text.lstrip().startswith("["):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
        for index, raw in enumerate(payload):
            records.append(_parse_record(raw, f"{path}[{index}]"))
    else:
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            records.append(_parse_record(raw, f"{path}:{line_no}"))

    logger.info(
        "qa dataset loaded",
        extra={"event": EVENT_QA_DATASET_LOADED, "path": str(path), "records": len(records)},
    )
    return records


@dataclass(frozen=True, slots=True)
class QAExample:
    record_id: str
    source: ChunkedBatch
    target: list[int]
    answer: str


def build_qa_example(
    record: QARecord,
    vocab: Vocab,
    source_len: int = 512,
    target_len: int = 40,
    n_chunks: int = 1,
) -> QAExample:
    """Encode one record as a chunked source and a target id list.

    Raises:
        ConfigurationError: ``source_len`` is not a multiple of ``n_chunks``
        SchemaValidationError: the question is empty
        CapacityError: the question and both ``</s>`` do not fit ``source_len``
    """
    if source_len % n_chunks:
        raise ConfigurationError(f"source_len {source_len} is not divisible by n_chunks {n_chunks}")
    if target_len < 1:
        raise ConfigurationError("target_len must be >= 1")
    question = vocab.encode(record.question)
    if not question:
        raise SchemaValidationError(f"record {record.id!r} field 'question': empty question")
    head = [*question, EOS_ID]
    room = source_len - len(head) - 1
    if room < 0:
        raise CapacityError(
            f"record {record.id!r}: question needs {len(head) + 1} tokens, capacity is {source_len}"
        )
    context = vocab.encode(flatten_context(record))[:room]
    source = chunk_input(
        [*head, *context, EOS_ID], source_len // n_chunks, n_chunks, pad_id=PAD_ID
    )
    target = [*vocab.encode(record.answer)[: target_len - 1], EOS_ID]
    return QAExample(record_id=record.id, source=source, target=target, answer=record.answer)
