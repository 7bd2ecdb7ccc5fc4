"""Chunking, memory slots and the memory-aware attention paths.

Encoder layout: the source is cut into ``n`` chunks of ``chunk_len`` tokens
and ``M`` learned memory rows are prefixed to every chunk, giving a
chunk-major sequence of ``n * (M + chunk_len)`` rows::

    [mem_0 .. mem_{M-1}, tok_0 .. tok_{c-1}]  (chunk 0)
    [mem_0 .. mem_{M-1}, tok_0 .. tok_{c-1}]  (chunk 1)
    ...

Attention pattern (True = allowed):

* token rows see every row of their own chunk (its tokens and its memory);
* memory rows see the tokens of their own chunk and every memory row of
  every chunk, which is the only path between chunks;
* padding token keys are masked everywhere.

The decoder reads the encoder through one of three cross-attention
sources: plain token attention (baseline), the two-level chunk selector
(Mem), or the concatenated memory rows only (the two WS variants).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from memt5.autograd import Tensor
from memt5.autograd import functional as F
from memt5.exceptions import AttentionMaskError, CapacityError, ConfigurationError, ShapeError
from memt5.model.layers import MultiHeadAttention

# ----- containers ------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ChunkedBatch:
    """Token ids ``[batch, n_chunks, chunk_len]`` and the real-token mask."""

    ids: np.ndarray
    pad_mask: np.ndarray

    def __post_init__(self) -> None:
        if self.ids.ndim != 3 or self.ids.shape != self.pad_mask.shape:
            raise ShapeError(
                f"ChunkedBatch expects matching [batch, n, chunk_len] arrays, "
                f"got ids {self.ids.shape} and pad_mask {self.pad_mask.shape}"
            )

    @property
    def batch_size(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_chunks(self) -> int:
        return int(self.ids.shape[1])

    @property
    def chunk_len(self) -> int:
        return int(self.ids.shape[2])

    @property
    def chunk_has_tokens(self) -> np.ndarray:
        """``[batch, n]``: chunks holding at least one real token."""
        return self.pad_mask.any(axis=-1)

    @classmethod
    def stack(cls, batches: Sequence[ChunkedBatch]) -> ChunkedBatch:
        return cls(
            ids=np.concatenate([b.ids for b in batches], axis=0),
            pad_mask=np.concatenate([b.pad_mask for b in batches], axis=0),
        )

    def select(self, rows: Sequence[int] | np.ndarray) -> ChunkedBatch:
        index = np.asarray(rows, dtype=np.int64)
        return ChunkedBatch(ids=self.ids[index], pad_mask=self.pad_mask[index])


@dataclass(frozen=True, slots=True)
class MemoryBank:
    """Per-chunk memory hidden states ``[batch, n, M, d_model]``."""

    states: Tensor
    init_embeddings: Tensor | None

    @property
    def mem_tokens(self) -> int:
        return self.states.shape[2]

    def concat(self) -> Tensor:
        """All chunks' memory rows as one sequence ``[batch, n*M, d_model]``."""
        batch, n, m, d = self.states.shape
        return F.reshape(self.states, (batch, n * m, d))


@dataclass(frozen=True, slots=True)
class EncoderOutput:
    chunk_states: Tensor
    memory: MemoryBank
    pad_mask: np.ndarray


# ----- chunking --------------------------------------------------------------


def chunk_input(
    ids: Sequence[int] | np.ndarray,
    chunk_len: int,
    n_chunks: int,
    pad_id: int = 0,
    truncate: bool = False,
) -> ChunkedBatch:
    """Row-major fill of one sequence into ``n_chunks x chunk_len`` (batch of 1).

    Raises:
        CapacityError: the sequence is longer than ``n_chunks * chunk_len``
            and ``truncate`` is False
    """
    tokens = np.asarray(ids, dtype=np.int64).reshape(-1)
    capacity = chunk_len * n_chunks
    if tokens.shape[0] > capacity:
        if not truncate:
            raise CapacityError(
                f"sequence of {tokens.shape[0]} tokens exceeds capacity "
                f"{n_chunks} x {chunk_len} = {capacity}"
            )
        tokens = tokens[:capacity]
    flat_ids = np.full(capacity, pad_id, dtype=np.int64)
    flat_ids[: tokens.shape[0]] = tokens
    real = np.zeros(capacity, dtype=bool)
    real[: tokens.shape[0]] = True
    return ChunkedBatch(
        ids=flat_ids.reshape(1, n_chunks, chunk_len),
        pad_mask=real.reshape(1, n_chunks, chunk_len),
    )


def chunk_sequences(
    sequences: Sequence[Sequence[int]],
    chunk_len: int,
    n_chunks: int,
    pad_id: int = 0,
    truncate: bool = False,
) -> ChunkedBatch:
    return ChunkedBatch.stack(
        [chunk_input(seq, chunk_len, n_chunks, pad_id, truncate) for seq in sequences]
    )


def prefix_memory(token_embeddings: Tensor, memory_init: Tensor | None) -> Tensor:
    """Prefix the shared memory embeddings to every chunk.

    ``token_embeddings`` is ``[batch, n, chunk_len, d]``; the result is
    ``[batch, n, M + chunk_len, d]``. With no memory the input is returned.
    """
    if memory_init is None or memory_init.shape[0] == 0:
        return token_embeddings
    batch, n, _, d = token_embeddings.shape
    if memory_init.shape[-1] != d:
        raise ShapeError(f"memory width {memory_init.shape[-1]} != embedding width {d}")
    memory = F.expand(memory_init, (batch, n, memory_init.shape[0], d))
    return F.concat([memory, token_embeddings], axis=2)


# ----- layout and mask -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ChunkLayout:
    """Row metadata for the flattened augmented encoder sequence."""

    n_chunks: int
    chunk_len: int
    mem_tokens: int

    @property
    def rows_per_chunk(self) -> int:
        return self.mem_tokens + self.chunk_len

    @property
    def length(self) -> int:
        return self.n_chunks * self.rows_per_chunk

    @property
    def chunk_of_row(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_chunks), self.rows_per_chunk)

    @property
    def is_memory_row(self) -> np.ndarray:
        within = np.tile(np.arange(self.rows_per_chunk), self.n_chunks)
        return within < self.mem_tokens

    @property
    def position_in_chunk(self) -> np.ndarray:
        """Token index inside its chunk; memory rows get 0 (they use the memory bucket)."""
        within = np.tile(np.arange(self.rows_per_chunk), self.n_chunks)
        return np.maximum(within - self.mem_tokens, 0)

    def token_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.is_memory_row)

    def memory_rows(self) -> np.ndarray:
        return np.flatnonzero(self.is_memory_row)


def build_mem_attention_mask(
    n: int, chunk_len: int, mem_tokens: int, pad_mask: np.ndarray | None = None
) -> np.ndarray:
    """Boolean mask over the augmented encoder sequence.

    Returns ``[L_aug, L_aug]`` when ``pad_mask`` is None, otherwise
    ``[batch, L_aug, L_aug]`` for ``pad_mask`` of shape ``[batch, n, chunk_len]``.
    A padding query row with nothing left to attend to is allowed only
    itself; its output is never read.
    """
    if n < 1 or chunk_len < 1 or mem_tokens < 0:
        raise ValueError(f"invalid layout n={n} chunk_len={chunk_len} M={mem_tokens}")
    layout = ChunkLayout(n, chunk_len, mem_tokens)
    chunk = layout.chunk_of_row
    memory = layout.is_memory_row
    base = (chunk[:, None] == chunk[None, :]) | (memory[:, None] & memory[None, :])
    if pad_mask is None:
        return base

    pad = np.asarray(pad_mask, dtype=bool)
    if pad.ndim != 3 or pad.shape[1:] != (n, chunk_len):
        raise ShapeError(f"pad_mask shape {pad.shape} does not match n={n}, chunk_len={chunk_len}")
    batch = pad.shape[0]
    key_valid = np.ones((batch, n, layout.rows_per_chunk), dtype=bool)
    key_valid[:, :, mem_tokens:] = pad
    key_valid = key_valid.reshape(batch, layout.length)
    mask = base[None, :, :] & key_valid[:, None, :]
    empty = ~mask.any(axis=-1)
    if empty.any():
        b_idx, r_idx = np.nonzero(empty)
        mask[b_idx, r_idx, r_idx] = True
    return mask


def count_allowed(n: int, chunk_len: int, mem_tokens: int) -> int:
    """True entries of the unpadded mask, counted from the constructed mask."""
    return int(build_mem_attention_mask(n, chunk_len, mem_tokens).sum())


def closed_form_allowed(n: int, chunk_len: int, mem_tokens: int) -> int:
    c, m = chunk_len, mem_tokens
    return n * (m * (c + n * m) + c * (c + m))


# ----- encoder attention -----------------------------------------------------


def mem_attention(
    x: Tensor,
    attention: MultiHeadAttention,
    mask: np.ndarray,
    layout: ChunkLayout,
    position_bias: Tensor | None = None,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """MemAttention over the flattened augmented sequence ``[batch, L_aug, d]``.

    Raises:
        ConfigurationError: ``attention`` has no memory query projection
    """
    if attention.q_mem is None:
        raise ConfigurationError("mem_attention needs an attention block with a q_mem projection")
    return attention(
        x, x, mask=mask, position_bias=position_bias, memory_rows=layout.is_memory_row, rng=rng
    )


# ----- cross-attention sources -----------------------------------------------


class CrossSource(Protocol):
    """What the decoder's cross-attention reads from."""

    def attend(
        self, attention: MultiHeadAttention, queries: Tensor, rng: np.random.Generator | None
    ) -> Tensor: ...

    @property
    def key_length(self) -> int: ...


@dataclass(frozen=True, slots=True)
class TokenCrossSource:
    """Plain cross-attention over every real token of every chunk."""

    states: Tensor
    pad_mask: np.ndarray

    @classmethod
    def from_encoder(cls, enc: EncoderOutput) -> TokenCrossSource:
        batch, n, c, d = enc.chunk_states.shape
        return cls(
            states=F.reshape(enc.chunk_states, (batch, n * c, d)),
            pad_mask=enc.pad_mask.reshape(batch, n * c),
        )

    @property
    def key_length(self) -> int:
        return self.states.shape[1]

    def attend(
        self, attention: MultiHeadAttention, queries: Tensor, rng: np.random.Generator | None
    ) -> Tensor:
        mask = self.pad_mask[:, None, :]
        if not self.pad_mask.any(axis=-1).all():
            raise AttentionMaskError("cross-attention source has no real tokens")
        return attention(queries, self.states, mask=mask, rng=rng)


@dataclass(frozen=True, slots=True)
class MemoryCrossSource:
    """WS cross-attention: keys and values are the ``n*M`` memory rows only."""

    memory: MemoryBank

    @property
    def key_length(self) -> int:
        return self.memory.concat().shape[1]

    def attend(
        self, attention: MultiHeadAttention, queries: Tensor, rng: np.random.Generator | None
    ) -> Tensor:
        return ws_cross_attention(queries, self.memory, attention, rng)


@dataclass(frozen=True, slots=True)
class SelectorCrossSource:
    """Chunk selector: score chunks through their memory, then attend inside chunks."""

    enc: EncoderOutput

    @property
    def key_length(self) -> int:
        return self.enc.chunk_states.shape[1] * self.enc.chunk_states.shape[2]

    def attend(
        self, attention: MultiHeadAttention, queries: Tensor, rng: np.random.Generator | None
    ) -> Tensor:
        return selector_cross_attention(queries, self.enc, attention, rng)


def ws_cross_attention(
    decoder_states: Tensor,
    memory: MemoryBank,
    attention: MultiHeadAttention,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Cross-attention whose keys/values are exactly the concatenated memory rows.

    Raises:
        ConfigurationError: the bank holds no memory rows
    """
    if memory.mem_tokens == 0:
        raise ConfigurationError("memory-only cross-attention needs mem_tokens >= 1")
    return attention(decoder_states, memory.concat(), mask=None, rng=rng)


def selector_cross_attention(
    decoder_states: Tensor,
    enc: EncoderOutput,
    attention: MultiHeadAttention,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Two-level soft selection over chunks, per head and decoder position.

    1. Chunk ``c`` scores ``logsumexp_m(q . k_mem[c, m])`` over its memory keys
       (0 when there is no memory); a softmax over chunks holding real tokens
       gives ``w_c``.
    2. Inside each chunk an ordinary masked softmax over its real tokens.

    The token weights are multiplied by ``w_c``, renormalized over all real
    tokens, and used to average the token values before ``W^O``.

    Raises:
        AttentionMaskError: some example has no real token in any chunk
    """
    states = enc.chunk_states
    batch, n, c, _ = states.shape
    has_tokens = enc.pad_mask.any(axis=-1)
    if not has_tokens.any(axis=-1).all():
        raise AttentionMaskError("selector input has an example whose chunks are all padding")

    heads = attention.num_heads
    q = attention.split_heads(attention.q(decoder_states))  # [B, H, T, dk]
    t = q.shape[2]
    q_chunks = F.reshape(q, (batch, heads, 1, t, attention.d_kv))

    def per_chunk(x: Tensor) -> Tensor:
        # [B, n, r, inner] -> [B, H, n, r, dk]
        return F.transpose(attention.split_heads(x), (0, 2, 1, 3, 4))

    k_tok = per_chunk(attention.k(states))
    v_tok = per_chunk(attention.v(states))

    if enc.memory.mem_tokens > 0:
        k_mem = per_chunk(attention.k(enc.memory.states))
        mem_scores = F.matmul(q_chunks, F.swapaxes(k_mem, -1, -2))  # [B, H, n, T, M]
        chunk_scores = F.logsumexp(mem_scores, axis=-1)  # [B, H, n, T]
        chunk_scores = F.swapaxes(chunk_scores, -1, -2)  # [B, H, T, n]
    else:
        chunk_scores = Tensor(np.zeros((batch, heads, t, n), dtype=states.dtype))
    chunk_weights = F.masked_softmax(chunk_scores, has_tokens[:, None, None, :])

    token_mask = np.where(has_tokens[..., None], enc.pad_mask, True)  # [B, n, c]
    token_scores = F.matmul(q_chunks, F.swapaxes(k_tok, -1, -2))  # [B, H, n, T, c]
    token_weights = F.masked_softmax(token_scores, token_mask[:, None, :, None, :])

    per_chunk_weight = F.swapaxes(chunk_weights, -1, -2)  # [B, H, n, T]
    combined = F.mul(token_weights, F.reshape(per_chunk_weight, (*per_chunk_weight.shape, 1)))
    total = F.sum(combined, axis=(2, 4), keepdims=True)
    combined = F.div(combined, total)
    combined = F.dropout(combined, attention.dropout, training=attention.training, rng=rng)

    context = F.sum(F.matmul(combined, v_tok), axis=2)  # [B, H, T, dk]
    return attention.o(attention.merge_heads(context))
