"""Reachability probes: does information cross chunk boundaries, and only via memory?

The probe perturbs the token embeddings of one input chunk and measures how
far the encoder output of every chunk moves. Output here is the whole
augmented chunk (memory rows and token rows). With one encoder layer a chunk
can only see its own tokens and the other chunks' *initial* memory rows,
which do not depend on any input, so off-diagonal influence is exactly zero.
From two layers on, memory rows written in layer one carry information
across, unless there are no memory rows at all.
"""

from __future__ import annotations

import time

import numpy as np

from memt5.autograd import Tensor, no_grad, precision
from memt5.autograd import functional as F
from memt5.config import ModelConfig, Variant
from memt5.model.memory import ChunkedBatch, chunk_sequences
from memt5.model.seq2seq import Seq2SeqModel
from memt5.verification.report import OracleReport

PROBE_TOLERANCE = 1e-9


def _encoded_chunks(model: Seq2SeqModel, embeddings: Tensor, pad_mask: np.ndarray) -> np.ndarray:
    enc = model.encoder(embeddings, model.memory_init, pad_mask)
    return np.concatenate([enc.memory.states.data, enc.chunk_states.data], axis=2)


def reachability_probe(
    model: Seq2SeqModel,
    batch: ChunkedBatch,
    *,
    scale: float = 1e-2,
    seed: int = 0,
) -> np.ndarray:
    """Influence matrix ``[n, n]``: entry ``(c, c')`` is the largest output change
    in chunk ``c`` when the tokens of chunk ``c'`` are perturbed by ``scale``.

    Uses the first example of ``batch``; runs in eval mode without a graph.
    """
    rng = np.random.default_rng(seed)
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            base_embeddings = F.embedding_lookup(model.shared, batch.ids[:1]).data
            pad_mask = batch.pad_mask[:1]
            reference = _encoded_chunks(model, Tensor(base_embeddings), pad_mask)
            n = batch.n_chunks
            influence = np.zeros((n, n), dtype=np.float64)
            for source in range(n):
                perturbed = base_embeddings.copy()
                noise = rng.standard_normal(perturbed[:, source].shape)
                perturbed[:, source] += scale * noise * pad_mask[:, source, :, None]
                moved = _encoded_chunks(model, Tensor(perturbed), pad_mask)
                change = np.abs(moved - reference)[0]  # [n, rows, d]
                influence[:, source] = change.reshape(n, -1).max(axis=1)
    finally:
        model.train(was_training)
    return influence


def probe_model(
    num_layers: int, mem_tokens: int, n_chunks: int = 2, chunk_len: int = 4, seed: int = 0
) -> Seq2SeqModel:
    """Small float64 Mem model for probing (call inside ``precision("float64")``)."""
    config = ModelConfig(
        variant=Variant.MEM,
        vocab_size=360,
        d_model=16,
        num_heads=2,
        d_kv=8,
        d_ff=32,
        num_layers=num_layers,
        dropout=0.0,
        n_chunks=n_chunks,
        chunk_len=chunk_len,
        mem_tokens=mem_tokens,
    )
    return Seq2SeqModel(config, seed=seed)


def reachability_case(
    num_layers: int, mem_tokens: int, *, n_chunks: int = 2, chunk_len: int = 4, seed: int = 0
) -> OracleReport:
    """Off-diagonal influence must be zero at one layer or without memory, nonzero otherwise."""
    started = time.perf_counter()
    with precision("float64"):
        model = probe_model(num_layers, mem_tokens, n_chunks, chunk_len, seed)
        rng = np.random.default_rng(seed)
        ids = rng.integers(3, 259, size=(1, n_chunks * chunk_len)).tolist()
        batch = chunk_sequences(ids, chunk_len=chunk_len, n_chunks=n_chunks)
        influence = reachability_probe(model, batch, seed=seed)
    off_diagonal = influence[~np.eye(n_chunks, dtype=bool)]
    cross = float(off_diagonal.max()) if off_diagonal.size else 0.0
    expect_flow = num_layers >= 2 and mem_tokens >= 1 and n_chunks > 1
    if expect_flow:
        weakest = float(off_diagonal.min())
        failed = weakest <= PROBE_TOLERANCE
        diff = 1.0 if failed else 0.0
        detail = f"min off-diagonal influence {weakest:.3e} (expected > {PROBE_TOLERANCE:g})"
    else:
        failed = cross >= PROBE_TOLERANCE
        diff = cross
        detail = f"max off-diagonal influence {cross:.3e} (expected 0)"
    return OracleReport(
        case_id=f"reachability/layers={num_layers}/M={mem_tokens}/n={n_chunks}",
        max_abs_diff=cross,
        max_rel_diff=diff if failed else 0.0,
        tolerance=PROBE_TOLERANCE,
        runtime_s=time.perf_counter() - started,
        detail=detail,
    )


def reachability_sweep(seed: int = 0) -> list[OracleReport]:
    return [
        reachability_case(layers, mem, seed=seed) for layers in (1, 2, 3) for mem in (0, 1, 2)
    ]
