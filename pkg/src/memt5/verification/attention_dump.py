"""Export of the encoder attention pattern for inspection.

The mask is written as a dense 0/1 CSV (one line per query row, one column
per key row) next to a JSON summary of its cost.

Example:
    summary = dump_attention(n=4, chunk_len=8, mem_tokens=2, out_dir=Path("runs/mask"))
    summary["ratio"]  # fraction of the dense score matrix that is computed
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

import numpy as np
import polars as pl

from memt5.model.memory import ChunkLayout, build_mem_attention_mask
from memt5.verification.oracles import count_attention_cost

MASK_FILENAME = "attention_mask.csv"
SUMMARY_FILENAME = "attention_summary.json"


def mask_frame(mask: np.ndarray) -> pl.DataFrame:
    """``[T, T]`` boolean mask as a frame with one ``UInt8`` column per key index."""
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ValueError(f"expected a square 2-d mask, got shape {mask.shape}")
    values = mask.astype(np.uint8)
    return pl.DataFrame({str(key): values[:, key] for key in range(values.shape[1])})


def attention_summary(n: int, chunk_len: int, mem_tokens: int) -> dict[str, Any]:
    cost = count_attention_cost(n, chunk_len, mem_tokens)
    return {
        "n": n,
        "chunk_len": chunk_len,
        "M": mem_tokens,
        "allowed": cost.allowed,
        "dense": cost.dense,
        "ratio": cost.ratio,
    }


def dump_attention(n: int, chunk_len: int, mem_tokens: int, out_dir: Path) -> dict[str, Any]:
    """Write the unpadded mask CSV and its summary JSON into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = build_mem_attention_mask(n, chunk_len, mem_tokens)
    layout = ChunkLayout(n, chunk_len, mem_tokens)
    summary = {**attention_summary(n, chunk_len, mem_tokens), "rows": layout.length}

    csv_path = out_dir / MASK_FILENAME
    tmp = csv_path.with_suffix(".csv.tmp")
    mask_frame(mask).write_csv(tmp)
    tmp.replace(csv_path)

    json_path = out_dir / SUMMARY_FILENAME
    tmp = json_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, json_path)
    return summary
