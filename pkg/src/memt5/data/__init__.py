"""Corpus ingestion, span corruption, QA examples and batching."""

from memt5.data.batching import (
    Batch,
    Dataset,
    MLMDataset,
    QADataset,
    epoch_batches,
    pad_labels,
)
from memt5.data.corpus import iter_documents, load_text_corpus, pack_sequences, read_documents
from memt5.data.qa import QAExample, QARecord, build_qa_example, flatten_context, load_qa_dataset
from memt5.data.span_corruption import (
    CorruptedExample,
    Span,
    apply_spans,
    plan_spans,
    span_corrupt,
)

__all__ = [
    "Batch",
    "CorruptedExample",
    "Dataset",
    "MLMDataset",
    "QADataset",
    "QAExample",
    "QARecord",
    "Span",
    "apply_spans",
    "build_qa_example",
    "epoch_batches",
    "flatten_context",
    "iter_documents",
    "load_qa_dataset",
    "load_text_corpus",
    "pack_sequences",
    "pad_labels",
    "plan_spans",
    "read_documents",
    "span_corrupt",
]
