"""Reference implementations written as explicit loops.

Nothing here calls the model's attention code: every score, softmax and
weighted sum is spelled out element by element in float64 so that a shared
bug cannot make both sides agree. The ``*_case`` helpers build a small
random instance, run the real implementation next to the oracle, and return
an :class:`~memt5.verification.report.OracleReport`.

Example:
    reports = oracle_sweep()
    assert all(r.passed for r in reports)
"""

from __future__ import annotations

import math
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from memt5.autograd import Tensor, no_grad, precision
from memt5.config import ModelConfig, Variant
from memt5.model.layers import MultiHeadAttention
from memt5.model.memory import (
    ChunkLayout,
    EncoderOutput,
    MemoryBank,
    build_mem_attention_mask,
    chunk_sequences,
    closed_form_allowed,
    count_allowed,
    mem_attention,
    selector_cross_attention,
    ws_cross_attention,
)
from memt5.model.seq2seq import Seq2SeqModel, shift_right
from memt5.verification.report import OracleReport, compare

FORWARD_TOLERANCE = 1e-5
REDUCTION_TOLERANCE = 1e-6


# ----- naive math ------------------------------------------------------------


def _project(row: np.ndarray, weight: np.ndarray, lo: int, hi: int) -> list[float]:
    return [
        math.fsum(float(row[i]) * float(weight[i, j]) for i in range(weight.shape[0]))
        for j in range(lo, hi)
    ]


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return math.fsum(x * y for x, y in zip(a, b, strict=True))


def _softmax(scores: dict[int, float]) -> dict[int, float]:
    peak = max(scores.values())
    exps = {j: math.exp(s - peak) for j, s in scores.items()}
    total = math.fsum(exps.values())
    return {j: e / total for j, e in exps.items()}


def _output(contexts: list[list[float]], w_o: np.ndarray) -> list[float]:
    flat = [value for head in contexts for value in head]
    return [
        math.fsum(flat[i] * float(w_o[i, j]) for i in range(len(flat))) for j in range(w_o.shape[1])
    ]


def dense_attention_oracle(
    x: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    w_o: np.ndarray,
    mask: np.ndarray,
    num_heads: int,
    bias: np.ndarray | None = None,
    w_q_mem: np.ndarray | None = None,
    memory_rows: np.ndarray | None = None,
    keys: np.ndarray | None = None,
) -> np.ndarray:
    """Per-head attention by triple loop, one explicit mask test per score.

    ``x`` is ``[t_q, d]`` (queries), ``keys`` defaults to ``x``. Rows flagged
    in ``memory_rows`` use ``w_q_mem`` for their queries. No ``1/sqrt(d_kv)``
    scaling. Raises ValueError for a query row with no allowed key.
    """
    source = x if keys is None else keys
    t_q, t_k = x.shape[0], source.shape[0]
    d_kv = w_q.shape[1] // num_heads
    out = np.zeros((t_q, w_o.shape[1]), dtype=np.float64)
    for i in range(t_q):
        use_mem = w_q_mem is not None and memory_rows is not None and bool(memory_rows[i])
        q_weight = w_q_mem if use_mem else w_q
        contexts: list[list[float]] = []
        for h in range(num_heads):
            lo, hi = h * d_kv, (h + 1) * d_kv
            q = _project(x[i], q_weight, lo, hi)
            scores: dict[int, float] = {}
            for j in range(t_k):
                if not mask[i, j]:
                    continue
                score = _dot(q, _project(source[j], w_k, lo, hi))
                if bias is not None:
                    score += float(bias[h, i, j])
                scores[j] = score
            if not scores:
                raise ValueError(f"query row {i} has no allowed key")
            probs = _softmax(scores)
            context = [0.0] * d_kv
            for j, p in probs.items():
                value = _project(source[j], w_v, lo, hi)
                for k in range(d_kv):
                    context[k] += p * value[k]
            contexts.append(context)
        out[i] = _output(contexts, w_o)
    return out


def selector_oracle(
    decoder_states: np.ndarray,
    chunk_states: np.ndarray,
    memory_states: np.ndarray,
    pad_mask: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    w_o: np.ndarray,
    num_heads: int,
) -> np.ndarray:
    """Two-level chunk selection for one example, by explicit loops.

    ``decoder_states`` ``[T, d]``, ``chunk_states`` ``[n, c, d]``,
    ``memory_states`` ``[n, M, d]``, ``pad_mask`` ``[n, c]``.
    """
    n, c, _ = chunk_states.shape
    mem = memory_states.shape[1]
    d_kv = w_q.shape[1] // num_heads
    valid_chunks = [ci for ci in range(n) if any(bool(pad_mask[ci, j]) for j in range(c))]
    out = np.zeros((decoder_states.shape[0], w_o.shape[1]), dtype=np.float64)
    for t in range(decoder_states.shape[0]):
        contexts: list[list[float]] = []
        for h in range(num_heads):
            lo, hi = h * d_kv, (h + 1) * d_kv
            q = _project(decoder_states[t], w_q, lo, hi)
            chunk_scores: dict[int, float] = {}
            for ci in valid_chunks:
                if mem == 0:
                    chunk_scores[ci] = 0.0
                    continue
                logits = [_dot(q, _project(memory_states[ci, m], w_k, lo, hi)) for m in range(mem)]
                peak = max(logits)
                chunk_scores[ci] = peak + math.log(math.fsum(math.exp(s - peak) for s in logits))
            chunk_weights = _softmax(chunk_scores)
            context = [0.0] * d_kv
            for ci, weight in chunk_weights.items():
                token_scores = {
                    j: _dot(q, _project(chunk_states[ci, j], w_k, lo, hi))
                    for j in range(c)
                    if pad_mask[ci, j]
                }
                for j, p in _softmax(token_scores).items():
                    value = _project(chunk_states[ci, j], w_v, lo, hi)
                    for k in range(d_kv):
                        context[k] += weight * p * value[k]
            contexts.append(context)
        out[t] = _output(contexts, w_o)
    return out


# ----- comparison cases ------------------------------------------------------


def _padding(rng: np.random.Generator, n: int, chunk_len: int, drop_last_chunk: bool) -> np.ndarray:
    pad = np.ones((1, n, chunk_len), dtype=bool)
    if chunk_len > 1:
        pad[0, -1, int(rng.integers(1, chunk_len)) :] = False
    if drop_last_chunk and n > 1:
        pad[0, -1, :] = False
    return pad


def _attention(
    rng: np.random.Generator, d_model: int, num_heads: int, mem_query: bool
) -> MultiHeadAttention:
    attention = MultiHeadAttention(d_model, num_heads, d_model // num_heads, 0.0, rng, mem_query)
    attention.eval()
    return attention


def mem_attention_case(
    n: int,
    chunk_len: int,
    mem_tokens: int,
    *,
    seed: int = 0,
    d_model: int = 16,
    num_heads: int = 2,
    tolerance: float = FORWARD_TOLERANCE,
) -> OracleReport:
    """Encoder MemAttention (with padding and a random bias) against the dense loop."""
    started = time.perf_counter()
    rng = np.random.default_rng((seed, n, chunk_len, mem_tokens))
    layout = ChunkLayout(n, chunk_len, mem_tokens)
    with precision("float64"):
        attention = _attention(rng, d_model, num_heads, mem_query=True)
        x = rng.standard_normal((1, layout.length, d_model))
        bias = 0.5 * rng.standard_normal((num_heads, layout.length, layout.length))
        pad = _padding(rng, n, chunk_len, drop_last_chunk=False)
        mask = build_mem_attention_mask(n, chunk_len, mem_tokens, pad)
        with no_grad():
            actual = mem_attention(Tensor(x), attention, mask, layout, Tensor(bias)).data[0]
    assert attention.q_mem is not None
    expected = dense_attention_oracle(
        x[0],
        attention.q.weight.data,
        attention.k.weight.data,
        attention.v.weight.data,
        attention.o.weight.data,
        mask[0],
        num_heads,
        bias=bias,
        w_q_mem=attention.q_mem.weight.data,
        memory_rows=layout.is_memory_row,
    )
    return compare(
        f"mem_attention/n={n}/c={chunk_len}/M={mem_tokens}",
        actual,
        expected,
        tolerance,
        time.perf_counter() - started,
    )


def selector_case(
    n: int,
    chunk_len: int,
    mem_tokens: int,
    *,
    seed: int = 0,
    d_model: int = 16,
    num_heads: int = 2,
    target_len: int = 3,
    tolerance: float = FORWARD_TOLERANCE,
) -> OracleReport:
    """Chunk selector against the loop oracle; the last chunk is fully padded when n > 1."""
    started = time.perf_counter()
    rng = np.random.default_rng((seed, n, chunk_len, mem_tokens, 1))
    with precision("float64"):
        attention = _attention(rng, d_model, num_heads, mem_query=False)
        decoder = rng.standard_normal((1, target_len, d_model))
        chunks = rng.standard_normal((1, n, chunk_len, d_model))
        memory = rng.standard_normal((1, n, mem_tokens, d_model))
        pad = _padding(rng, n, chunk_len, drop_last_chunk=True)
        enc = EncoderOutput(Tensor(chunks), MemoryBank(Tensor(memory), None), pad)
        with no_grad():
            actual = selector_cross_attention(Tensor(decoder), enc, attention).data[0]
    expected = selector_oracle(
        decoder[0],
        chunks[0],
        memory[0],
        pad[0],
        attention.q.weight.data,
        attention.k.weight.data,
        attention.v.weight.data,
        attention.o.weight.data,
        num_heads,
    )
    return compare(
        f"selector/n={n}/c={chunk_len}/M={mem_tokens}",
        actual,
        expected,
        tolerance,
        time.perf_counter() - started,
    )


def ws_case(
    n: int,
    mem_tokens: int,
    *,
    seed: int = 0,
    d_model: int = 16,
    num_heads: int = 2,
    target_len: int = 3,
    tolerance: float = FORWARD_TOLERANCE,
) -> OracleReport:
    """Memory-only cross-attention against the dense loop over the ``n*M`` memory rows."""
    started = time.perf_counter()
    rng = np.random.default_rng((seed, n, mem_tokens, 2))
    with precision("float64"):
        attention = _attention(rng, d_model, num_heads, mem_query=False)
        decoder = rng.standard_normal((1, target_len, d_model))
        memory = rng.standard_normal((1, n, mem_tokens, d_model))
        with no_grad():
            bank = MemoryBank(Tensor(memory), None)
            actual = ws_cross_attention(Tensor(decoder), bank, attention).data[0]
    expected = dense_attention_oracle(
        decoder[0],
        attention.q.weight.data,
        attention.k.weight.data,
        attention.v.weight.data,
        attention.o.weight.data,
        np.ones((target_len, n * mem_tokens), dtype=bool),
        num_heads,
        keys=memory[0].reshape(n * mem_tokens, d_model),
    )
    return compare(
        f"ws_cross/n={n}/M={mem_tokens}", actual, expected, tolerance, time.perf_counter() - started
    )


def oracle_sweep(
    ns: Iterable[int] = (1, 2, 4),
    chunk_lens: Iterable[int] = (4, 8),
    mem_tokens: Iterable[int] = (0, 1, 2),
    seed: int = 0,
) -> list[OracleReport]:
    """Every encoder and cross-attention path against its oracle over a layout grid."""
    reports: list[OracleReport] = []
    mems = list(mem_tokens)
    lens = list(chunk_lens)
    for n in ns:
        for m in mems:
            for c in lens:
                reports.append(mem_attention_case(n, c, m, seed=seed))
                reports.append(selector_case(n, c, m, seed=seed))
            if m > 0:
                reports.append(ws_case(n, m, seed=seed))
    return reports


# ----- baseline reduction ----------------------------------------------------


def baseline_reduction_case(
    seed: int, *, tolerance: float = REDUCTION_TOLERANCE, vocab_size: int = 400
) -> OracleReport:
    """Mem with one chunk and no memory, given the baseline's weights, matches the baseline."""
    started = time.perf_counter()
    shape = {
        "vocab_size": vocab_size,
        "d_model": 16,
        "num_heads": 2,
        "d_kv": 8,
        "d_ff": 32,
        "num_layers": 2,
        "dropout": 0.0,
        "n_chunks": 1,
        "chunk_len": 8,
        "mem_tokens": 0,
    }
    rng = np.random.default_rng(seed)
    with precision("float64"):
        baseline = Seq2SeqModel(ModelConfig(variant=Variant.BASELINE, **shape), seed=seed)
        mem = Seq2SeqModel(ModelConfig(variant=Variant.MEM, **shape), seed=seed + 1)
        mem.load_state_dict(baseline.state_dict(), strict=False)
        baseline.eval()
        mem.eval()
        ids = rng.integers(3, vocab_size - 100, size=(2, 6))
        batch = chunk_sequences(ids.tolist(), chunk_len=8, n_chunks=1)
        labels = rng.integers(3, vocab_size - 100, size=(2, 4))
        with no_grad():
            expected = baseline.forward(batch, shift_right(labels)).data
            actual = mem.forward(batch, shift_right(labels)).data
    return compare(
        f"baseline_reduction/seed={seed}",
        actual,
        expected,
        tolerance,
        time.perf_counter() - started,
    )


def baseline_reduction_sweep(draws: int = 20) -> list[OracleReport]:
    return [baseline_reduction_case(seed) for seed in range(draws)]


# ----- attention cost --------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AttentionCost:
    n_chunks: int
    chunk_len: int
    mem_tokens: int
    allowed: int
    dense: int

    @property
    def ratio(self) -> float:
        return self.allowed / self.dense


def count_attention_cost(n: int, chunk_len: int, mem_tokens: int) -> AttentionCost:
    """Allowed score count of the encoder mask next to dense attention over the same rows."""
    if n < 1 or chunk_len < 1 or mem_tokens < 0:
        raise ValueError(f"invalid layout n={n} chunk_len={chunk_len} M={mem_tokens}")
    return AttentionCost(
        n_chunks=n,
        chunk_len=chunk_len,
        mem_tokens=mem_tokens,
        allowed=count_allowed(n, chunk_len, mem_tokens),
        dense=(n * (chunk_len + mem_tokens)) ** 2,
    )


def cost_sweep(
    source_len: int = 512, mem_tokens: int = 2, ns: Iterable[int] = (1, 2, 4, 8, 16)
) -> list[AttentionCost]:
    costs = []
    for n in ns:
        if source_len % n:
            raise ValueError(f"source_len {source_len} is not divisible by n={n}")
        costs.append(count_attention_cost(n, source_len // n, mem_tokens))
    return costs


def cost_reports(costs: Sequence[AttentionCost]) -> list[OracleReport]:
    """Closed-form agreement per layout plus one report for the monotone ratio trend."""
    reports = []
    for cost in costs:
        expected = closed_form_allowed(cost.n_chunks, cost.chunk_len, cost.mem_tokens)
        diff = float(abs(cost.allowed - expected))
        reports.append(
            OracleReport(
                case_id=f"cost/n={cost.n_chunks}/c={cost.chunk_len}/M={cost.mem_tokens}",
                max_abs_diff=diff,
                max_rel_diff=diff / expected if expected else diff,
                tolerance=0.0,
                detail=f"allowed={cost.allowed} dense={cost.dense} ratio={cost.ratio:.4f}",
            )
        )
    ratios = [c.ratio for c in costs]
    rises = [max(0.0, later - earlier) for earlier, later in zip(ratios, ratios[1:], strict=False)]
    worst = max(rises, default=0.0)
    reports.append(
        OracleReport(
            case_id="cost/monotone_ratio",
            max_abs_diff=worst,
            max_rel_diff=worst,
            tolerance=0.0,
            detail=" ".join(f"{r:.4f}" for r in ratios),
        )
    )
    return reports
