"""T5 baseline and memory-slot encoder-decoder models."""

from memt5.model.layers import (
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    RelativePositionBias,
    RMSNorm,
    causal_mask,
    relative_position_bucket,
)
from memt5.model.memory import (
    ChunkedBatch,
    ChunkLayout,
    EncoderOutput,
    MemoryBank,
    build_mem_attention_mask,
    chunk_input,
    chunk_sequences,
    closed_form_allowed,
    count_allowed,
    mem_attention,
    prefix_memory,
    selector_cross_attention,
    ws_cross_attention,
)
from memt5.model.seq2seq import (
    IGNORE_INDEX,
    Seq2SeqModel,
    expected_parameter_count,
    greedy_decode,
    shift_right,
)

__all__ = [
    "IGNORE_INDEX",
    "ChunkLayout",
    "ChunkedBatch",
    "EncoderOutput",
    "FeedForward",
    "Linear",
    "MemoryBank",
    "Module",
    "MultiHeadAttention",
    "RMSNorm",
    "RelativePositionBias",
    "Seq2SeqModel",
    "build_mem_attention_mask",
    "causal_mask",
    "chunk_input",
    "chunk_sequences",
    "closed_form_allowed",
    "count_allowed",
    "expected_parameter_count",
    "greedy_decode",
    "mem_attention",
    "prefix_memory",
    "relative_position_bucket",
    "selector_cross_attention",
    "shift_right",
    "ws_cross_attention",
]
