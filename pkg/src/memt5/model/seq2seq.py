"""Encoder-decoder models for every variant, plus greedy decoding.

One :class:`Seq2SeqModel` class covers all four variants; the variant only
changes two things:

* whether encoder attention has a separate memory query projection
  (``mem``, ``mem_ws``), and
* what the decoder cross-attends to: encoder tokens (``baseline``), the
  chunk selector (``mem``), or the concatenated memory rows (``mem_ws``,
  ``mem_ws_wma``).

The baseline is the same encoder with one chunk and no memory rows.

Example:
    config = ModelConfig(variant=Variant.MEM, n_chunks=2, chunk_len=8, mem_tokens=1,
                         vocab_size=400, d_model=16, num_heads=2, d_kv=8, d_ff=32)
    model = Seq2SeqModel(config, seed=42)
    batch = chunk_sequences([[5, 6, 7]], chunk_len=8, n_chunks=2)
    loss = model.loss(batch, np.array([[9, 1]]))
"""

from __future__ import annotations

import numpy as np

from memt5.autograd import Tensor, no_grad
from memt5.autograd import functional as F
from memt5.config import ModelConfig, Variant
from memt5.model.layers import (
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    RelativePositionBias,
    RMSNorm,
    causal_mask,
    parameter,
)
from memt5.model.memory import (
    ChunkedBatch,
    ChunkLayout,
    CrossSource,
    EncoderOutput,
    MemoryBank,
    MemoryCrossSource,
    SelectorCrossSource,
    TokenCrossSource,
    build_mem_attention_mask,
    mem_attention,
    prefix_memory,
)
from memt5.tokenizer import EOS_ID, PAD_ID

IGNORE_INDEX = -100
"""Label value excluded from the loss and from accuracy."""


def shift_right(labels: np.ndarray, start_id: int = PAD_ID) -> np.ndarray:
    """Right-shifted decoder inputs ``[start, labels[:-1]]`` with ignored ids as pad."""
    labels = np.asarray(labels, dtype=np.int64)
    shifted = np.empty_like(labels)
    shifted[:, 0] = start_id
    shifted[:, 1:] = labels[:, :-1]
    return np.where(shifted == IGNORE_INDEX, PAD_ID, shifted)


class EncoderLayer(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        d = config.d_model
        self.attention_norm = RMSNorm(d, config.layer_norm_eps)
        self.attention = MultiHeadAttention(
            d,
            config.num_heads,
            config.d_kv,
            config.dropout,
            rng,
            mem_query=config.variant.uses_mem_query,
        )
        self.ffn_norm = RMSNorm(d, config.layer_norm_eps)
        self.ffn = FeedForward(d, config.d_ff, config.dropout, rng)
        self.dropout = config.dropout

    def __call__(
        self,
        x: Tensor,
        mask: np.ndarray,
        position_bias: Tensor,
        layout: ChunkLayout,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        normed = self.attention_norm(x)
        if self.attention.q_mem is not None:
            h = mem_attention(normed, self.attention, mask, layout, position_bias, rng)
        else:
            h = self.attention(normed, normed, mask=mask, position_bias=position_bias, rng=rng)
        x = F.add(x, F.dropout(h, self.dropout, training=self.training, rng=rng))
        h = self.ffn(self.ffn_norm(x), rng)
        return F.add(x, F.dropout(h, self.dropout, training=self.training, rng=rng))


class DecoderLayer(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        d = config.d_model
        self.self_attention_norm = RMSNorm(d, config.layer_norm_eps)
        self.self_attention = MultiHeadAttention(
            d, config.num_heads, config.d_kv, config.dropout, rng
        )
        self.cross_attention_norm = RMSNorm(d, config.layer_norm_eps)
        self.cross_attention = MultiHeadAttention(
            d, config.num_heads, config.d_kv, config.dropout, rng
        )
        self.ffn_norm = RMSNorm(d, config.layer_norm_eps)
        self.ffn = FeedForward(d, config.d_ff, config.dropout, rng)
        self.dropout = config.dropout

    def __call__(
        self,
        x: Tensor,
        mask: np.ndarray,
        position_bias: Tensor,
        source: CrossSource,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        normed = self.self_attention_norm(x)
        h = self.self_attention(normed, normed, mask=mask, position_bias=position_bias, rng=rng)
        x = F.add(x, F.dropout(h, self.dropout, training=self.training, rng=rng))
        h = source.attend(self.cross_attention, self.cross_attention_norm(x), rng)
        x = F.add(x, F.dropout(h, self.dropout, training=self.training, rng=rng))
        h = self.ffn(self.ffn_norm(x), rng)
        return F.add(x, F.dropout(h, self.dropout, training=self.training, rng=rng))


class Encoder(Module):
    """Encoder stack over the chunk-major augmented sequence."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        self.layers = [EncoderLayer(config, rng) for _ in range(config.num_layers)]
        self.relative_bias = RelativePositionBias(
            config.num_heads,
            config.rel_pos_buckets,
            config.rel_pos_max_distance,
            bidirectional=True,
            rng=rng,
            std=config.d_model**-0.5,
        )
        self.final_norm = RMSNorm(config.d_model, config.layer_norm_eps)
        self.dropout = config.dropout

    def __call__(
        self,
        token_embeddings: Tensor,
        memory_init: Tensor | None,
        pad_mask: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> EncoderOutput:
        batch, n, c, d = token_embeddings.shape
        m = 0 if memory_init is None else memory_init.shape[0]
        layout = ChunkLayout(n, c, m)

        x = prefix_memory(token_embeddings, memory_init)
        x = F.reshape(x, (batch, layout.length, d))
        x = F.dropout(x, self.dropout, training=self.training, rng=rng)

        mask = build_mem_attention_mask(n, c, m, pad_mask)
        position = layout.position_in_chunk
        is_memory = layout.is_memory_row
        bias = self.relative_bias(position, position, is_memory, is_memory)
        for layer in self.layers:
            x = layer(x, mask, bias, layout, rng)
        x = F.dropout(self.final_norm(x), self.dropout, training=self.training, rng=rng)

        x = F.reshape(x, (batch, n, layout.rows_per_chunk, d))
        memory = F.take(x, 0, m, axis=2)
        chunk_states = F.take(x, m, layout.rows_per_chunk, axis=2)
        return EncoderOutput(
            chunk_states=chunk_states,
            memory=MemoryBank(states=memory, init_embeddings=memory_init),
            pad_mask=np.asarray(pad_mask, dtype=bool),
        )


class Decoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        self.layers = [DecoderLayer(config, rng) for _ in range(config.num_layers)]
        self.relative_bias = RelativePositionBias(
            config.num_heads,
            config.rel_pos_buckets,
            config.rel_pos_max_distance,
            bidirectional=False,
            rng=rng,
            std=config.d_model**-0.5,
        )
        self.final_norm = RMSNorm(config.d_model, config.layer_norm_eps)
        self.dropout = config.dropout

    def __call__(
        self, embeddings: Tensor, source: CrossSource, rng: np.random.Generator | None = None
    ) -> Tensor:
        length = embeddings.shape[1]
        mask = causal_mask(length)
        position = np.arange(length)
        bias = self.relative_bias(position, position)
        x = F.dropout(embeddings, self.dropout, training=self.training, rng=rng)
        for layer in self.layers:
            x = layer(x, mask, bias, source, rng)
        return F.dropout(self.final_norm(x), self.dropout, training=self.training, rng=rng)


class Seq2SeqModel(Module):
    """T5 encoder-decoder with optional memory slots, for any :class:`Variant`."""

    def __init__(self, config: ModelConfig, seed: int = 42) -> None:
        rng = np.random.default_rng(seed)
        self.config = config
        self.shared = parameter(rng, (config.vocab_size, config.d_model), 1.0)
        self.memory_init = (
            parameter(rng, (config.mem_tokens, config.d_model), 1.0)
            if config.mem_tokens > 0
            else None
        )
        self.encoder = Encoder(config, rng)
        self.decoder = Decoder(config, rng)
        self.lm_head = (
            None
            if config.tie_embeddings
            else Linear(config.d_model, config.vocab_size, rng, config.d_model**-0.5)
        )

    @property
    def variant(self) -> Variant:
        return self.config.variant

    def encode(self, batch: ChunkedBatch, rng: np.random.Generator | None = None) -> EncoderOutput:
        embeddings = F.embedding_lookup(self.shared, batch.ids)
        return self.encoder(embeddings, self.memory_init, batch.pad_mask, rng)

    def cross_source(self, enc: EncoderOutput) -> CrossSource:
        if self.variant.uses_selector:
            return SelectorCrossSource(enc)
        if self.variant.decodes_from_memory:
            return MemoryCrossSource(enc.memory)
        return TokenCrossSource.from_encoder(enc)

    def output_logits(self, hidden: Tensor) -> Tensor:
        if self.lm_head is None:
            scaled = F.mul(hidden, self.config.d_model**-0.5)
            return F.matmul(scaled, F.transpose(self.shared, (1, 0)))
        return self.lm_head(hidden)

    def decode(
        self,
        decoder_input_ids: np.ndarray,
        source: CrossSource,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Logits ``[batch, T, vocab]`` for known decoder inputs."""
        embeddings = F.embedding_lookup(self.shared, np.asarray(decoder_input_ids))
        return self.output_logits(self.decoder(embeddings, source, rng))

    def forward(
        self,
        batch: ChunkedBatch,
        decoder_input_ids: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        enc = self.encode(batch, rng)
        return self.decode(decoder_input_ids, self.cross_source(enc), rng)

    def loss(
        self, batch: ChunkedBatch, labels: np.ndarray, rng: np.random.Generator | None = None
    ) -> Tensor:
        """Mean token cross-entropy of ``labels`` (``-100`` entries ignored)."""
        labels = np.asarray(labels, dtype=np.int64)
        logits = self.forward(batch, shift_right(labels), rng)
        flat = F.reshape(logits, (-1, self.config.vocab_size))
        return F.cross_entropy_mean(flat, labels.reshape(-1), IGNORE_INDEX)


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form parameter count for ``config``.

    ``V*D`` shared embedding, ``V*D`` more when untied, ``2*(B+1)*H`` for the
    two bias tables, ``M*D`` memory embeddings, per encoder layer
    ``4D^2 (+D^2 with a memory query) + 2DF + 2D``, per decoder layer
    ``8D^2 + 2DF + 3D``, and ``2D`` for the final norms.
    """
    v, d, f = config.vocab_size, config.d_model, config.d_ff
    h, b, m = config.num_heads, config.rel_pos_buckets, config.mem_tokens
    inner = config.num_heads * config.d_kv
    q_mem = d * inner if config.variant.uses_mem_query else 0
    encoder_layer = 4 * d * inner + q_mem + 2 * d * f + 2 * d
    decoder_layer = 8 * d * inner + 2 * d * f + 3 * d
    return (
        v * d
        + (0 if config.tie_embeddings else v * d)
        + 2 * (b + 1) * h
        + m * d
        + config.num_layers * (encoder_layer + decoder_layer)
        + 2 * d
    )


def greedy_decode(model: Seq2SeqModel, batch: ChunkedBatch, max_len: int) -> list[list[int]]:
    """Argmax decoding, one list of ids per example.

    Each output stops after its first ``</s>`` (which is included) or after
    ``max_len`` tokens. Runs in eval mode without building a graph; the
    encoder output is computed once and reused at every step.
    """
    outputs: list[list[int]] = [[] for _ in range(batch.batch_size)]
    if max_len <= 0:
        return outputs
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            source = model.cross_source(model.encode(batch))
            finished = np.zeros(batch.batch_size, dtype=bool)
            decoder_ids = np.full((batch.batch_size, 1), PAD_ID, dtype=np.int64)
            for _ in range(max_len):
                logits = model.decode(decoder_ids, source).data[:, -1, :]
                next_ids = np.argmax(logits, axis=-1).astype(np.int64)
                next_ids = np.where(finished, PAD_ID, next_ids)
                for row in np.flatnonzero(~finished):
                    outputs[row].append(int(next_ids[row]))
                finished |= next_ids == EOS_ID
                if finished.all():
                    break
                decoder_ids = np.concatenate([decoder_ids, next_ids[:, None]], axis=1)
    finally:
        model.train(was_training)
    return outputs
