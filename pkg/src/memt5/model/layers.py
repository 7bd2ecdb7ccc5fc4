"""T5 building blocks on top of :mod:`memt5.autograd`.

Conventions shared by every block:

* Weights are stored ``[d_in, d_out]`` and applied as ``x @ W``; no biases.
* Normalization is RMS-style (no mean subtraction, no bias).
* Attention scores are ``Q Kᵀ + position_bias`` with no ``1/sqrt(d_kv)``
  scaling, as in T5.
* Blocks are pre-norm residual: ``x + sublayer(norm(x))``.

Projections are initialized from a truncated normal with std
``1/sqrt(d_model)``; embedding tables use std 1.0.
"""

from __future__ import annotations

from collections.abc import Iterator
from typing import Any

import numpy as np

from memt5.autograd import Tensor
from memt5.autograd import functional as F
from memt5.exceptions import CheckpointMismatchError, ShapeError

# ----- initialization --------------------------------------------------------


def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    """Normal samples with everything beyond two std redrawn."""
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * std


def parameter(
    rng: np.random.Generator, shape: tuple[int, ...], std: float, name: str | None = None
) -> Tensor:
    return Tensor(truncated_normal(rng, shape, std), requires_grad=True, name=name)


# ----- module base -----------------------------------------------------------


class Module:
    """Parameter container; parameters are discovered from instance attributes.

    Names are dotted attribute paths (``encoder.layers.0.attention.q.weight``)
    and follow attribute assignment order, so they are stable across runs.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield f"{prefix}{name}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{index}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> Module:
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> list[str]:
        """Copy arrays into parameters in place; returns the names left untouched.

        Raises:
            CheckpointMismatchError: a shape differs, or ``strict`` and the key
                sets differ
        """
        own = dict(self.named_parameters())
        unexpected = sorted(set(state) - set(own))
        missing = sorted(set(own) - set(state))
        if strict and (unexpected or missing):
            raise CheckpointMismatchError(
                f"parameter names differ: missing={missing[:5]} unexpected={unexpected[:5]}"
            )
        for name, p in own.items():
            if name not in state:
                continue
            array = np.asarray(state[name])
            if array.shape != p.shape:
                raise CheckpointMismatchError(
                    f"tensor {name!r}: checkpoint shape {array.shape} != model shape {p.shape}"
                )
            p.data = array.astype(p.dtype, copy=True)
        return missing


# ----- layers ----------------------------------------------------------------


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float) -> None:
        self.weight = parameter(rng, (d_in, d_out), std)

    def __call__(self, x: Tensor) -> Tensor:
        return F.matmul(x, self.weight)


class RMSNorm(Module):
    def __init__(self, d_model: int, eps: float = 1e-6) -> None:
        self.weight = Tensor(np.ones(d_model), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.rms_norm(x, self.weight, self.eps)


class FeedForward(Module):
    """ReLU feed-forward: ``relu(x W_i) W_o`` with dropout on the hidden layer."""

    def __init__(self, d_model: int, d_ff: int, dropout: float, rng: np.random.Generator) -> None:
        std = d_model**-0.5
        self.wi = Linear(d_model, d_ff, rng, std)
        self.wo = Linear(d_ff, d_model, rng, std)
        self.dropout = dropout

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        hidden = F.relu(self.wi(x))
        hidden = F.dropout(hidden, self.dropout, training=self.training, rng=rng)
        return self.wo(hidden)


# ----- relative position bias ------------------------------------------------


def relative_position_bucket(
    rel_pos: Any,
    bidirectional: bool = True,
    num_buckets: int = 32,
    max_distance: int = 128,
) -> Any:
    """T5 bucketing of ``rel_pos = query_pos - key_pos``.

    Small distances get one bucket each, larger ones share logarithmically
    sized buckets up to ``max_distance`` and everything beyond is clamped to
    the last bucket. Bidirectional mode gives keys after the query (negative
    ``rel_pos``) the upper half of the buckets; unidirectional mode treats
    future keys as distance 0. Accepts an int or an integer array.
    """
    if num_buckets < 2:
        raise ValueError(f"num_buckets must be >= 2, got {num_buckets}")
    rel = np.asarray(rel_pos, dtype=np.int64)
    buckets = np.zeros_like(rel)
    if bidirectional:
        num_buckets //= 2
        buckets = buckets + (rel < 0).astype(np.int64) * num_buckets
        distance = np.abs(rel)
    else:
        distance = np.maximum(rel, 0)
    max_exact = num_buckets // 2
    if max_exact == 0:
        return buckets if buckets.ndim else int(buckets)
    scaled = np.log(np.maximum(distance, max_exact) / max_exact) / np.log(max_distance / max_exact)
    large = max_exact + (scaled * (num_buckets - max_exact)).astype(np.int64)
    large = np.minimum(large, num_buckets - 1)
    buckets = buckets + np.where(distance < max_exact, distance, large)
    return buckets if buckets.ndim else int(buckets)


class RelativePositionBias(Module):
    """Learned per-head bias indexed by relative-position bucket.

    The table has ``num_buckets + 1`` rows; the extra row is the memory bucket
    used for every score whose query or key is a memory row, since memory
    rows have no sequence position.
    """

    def __init__(
        self,
        num_heads: int,
        num_buckets: int,
        max_distance: int,
        bidirectional: bool,
        rng: np.random.Generator,
        std: float,
    ) -> None:
        self.weight = parameter(rng, (num_buckets + 1, num_heads), std)
        self.num_buckets = num_buckets
        self.max_distance = max_distance
        self.bidirectional = bidirectional

    def bucket_ids(
        self,
        query_pos: np.ndarray,
        key_pos: np.ndarray,
        query_is_memory: np.ndarray | None = None,
        key_is_memory: np.ndarray | None = None,
    ) -> np.ndarray:
        rel = np.asarray(query_pos)[:, None] - np.asarray(key_pos)[None, :]
        ids = relative_position_bucket(rel, self.bidirectional, self.num_buckets, self.max_distance)
        memory = np.zeros(ids.shape, dtype=bool)
        if query_is_memory is not None:
            memory |= np.asarray(query_is_memory, dtype=bool)[:, None]
        if key_is_memory is not None:
            memory |= np.asarray(key_is_memory, dtype=bool)[None, :]
        return np.where(memory, self.num_buckets, ids)

    def __call__(
        self,
        query_pos: np.ndarray,
        key_pos: np.ndarray,
        query_is_memory: np.ndarray | None = None,
        key_is_memory: np.ndarray | None = None,
    ) -> Tensor:
        """Bias of shape ``[heads, t_q, t_k]``."""
        ids = self.bucket_ids(query_pos, key_pos, query_is_memory, key_is_memory)
        return F.transpose(F.embedding_lookup(self.weight, ids), (2, 0, 1))


# ----- attention -------------------------------------------------------------


class MultiHeadAttention(Module):
    """T5 multi-head attention with an optional second query projection.

    With ``mem_query=True`` (MemAttention) rows flagged in ``memory_rows`` are
    projected with ``q_mem`` and every other row with ``q``; keys and values
    always share ``k`` and ``v``.
    """

    def __init__(
        self,
        d_model: int,
        num_heads: int,
        d_kv: int,
        dropout: float,
        rng: np.random.Generator,
        mem_query: bool = False,
    ) -> None:
        inner = num_heads * d_kv
        std = d_model**-0.5
        self.q = Linear(d_model, inner, rng, std)
        self.k = Linear(d_model, inner, rng, std)
        self.v = Linear(d_model, inner, rng, std)
        self.o = Linear(inner, d_model, rng, std)
        self.q_mem = Linear(d_model, inner, rng, std) if mem_query else None
        self.num_heads = num_heads
        self.d_kv = d_kv
        self.dropout = dropout

    def split_heads(self, x: Tensor) -> Tensor:
        """``[..., t, H*d_kv]`` -> ``[..., H, t, d_kv]``."""
        *lead, t, _ = x.shape
        return F.swapaxes(F.reshape(x, (*lead, t, self.num_heads, self.d_kv)), -3, -2)

    def merge_heads(self, x: Tensor) -> Tensor:
        """``[..., H, t, d_kv]`` -> ``[..., t, H*d_kv]``."""
        *lead, _, t, _ = x.shape
        return F.reshape(F.swapaxes(x, -3, -2), (*lead, t, self.num_heads * self.d_kv))

    def project_queries(self, x: Tensor, memory_rows: np.ndarray | None = None) -> Tensor:
        queries = self.q(x)
        if self.q_mem is None or memory_rows is None or not np.any(memory_rows):
            return queries
        rows = np.asarray(memory_rows, dtype=bool)
        if rows.shape[0] != x.shape[-2]:
            raise ShapeError(f"memory_rows has {rows.shape[0]} entries for {x.shape[-2]} rows")
        select = rows.astype(x.dtype)[:, None]
        return F.add(F.mul(queries, 1.0 - select), F.mul(self.q_mem(x), select))

    def attend(
        self,
        q: Tensor,
        k: Tensor,
        v: Tensor,
        mask: np.ndarray | None,
        position_bias: Tensor | None = None,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Masked attention over already split heads; returns ``[..., H, t_q, d_kv]``."""
        scores = F.matmul(q, F.swapaxes(k, -1, -2))
        if position_bias is not None:
            scores = F.add(scores, position_bias)
        if mask is None:
            mask = np.ones((1, 1), dtype=bool)
        elif mask.ndim >= 3:
            mask = np.expand_dims(mask, -3)
        probs = F.masked_softmax(scores, mask)
        probs = F.dropout(probs, self.dropout, training=self.training, rng=rng)
        return F.matmul(probs, v)

    def __call__(
        self,
        queries: Tensor,
        keys: Tensor,
        mask: np.ndarray | None = None,
        position_bias: Tensor | None = None,
        memory_rows: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Attend from ``queries [B, t_q, D]`` to ``keys [B, t_k, D]``.

        ``mask`` is boolean ``[t_q, t_k]`` or ``[B, t_q, t_k]`` (True = allowed);
        ``position_bias`` is ``[H, t_q, t_k]``.
        """
        q = self.split_heads(self.project_queries(queries, memory_rows))
        k = self.split_heads(self.k(keys))
        v = self.split_heads(self.v(keys))
        context = self.attend(q, k, v, mask, position_bias, rng)
        return self.o(self.merge_heads(context))


def causal_mask(length: int) -> np.ndarray:
    return np.tril(np.ones((length, length), dtype=bool))
