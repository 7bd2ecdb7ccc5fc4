"""Append-only metrics CSV and multi-run summaries.

One row per (step, split) evaluation or per-epoch train summary. Columns
that do not apply to a row (QA scores on an MLM run, accuracy on QA) are
left empty.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path
from typing import Any

import polars as pl

from memt5.exceptions import DataError

METRICS_FILENAME = "metrics.csv"

SCHEMA: dict[str, Any] = {
    "step": pl.Int64,
    "epoch": pl.Int64,
    "split": pl.Utf8,
    "loss": pl.Float64,
    "acc": pl.Float64,
    "ppl": pl.Float64,
    "em": pl.Float64,
    "f1": pl.Float64,
    "precision": pl.Float64,
    "recall": pl.Float64,
    "lr": pl.Float64,
    "wallclock_s": pl.Float64,
}
COLUMNS = tuple(SCHEMA)
SCORE_COLUMNS = ("loss", "acc", "ppl", "em", "f1", "precision", "recall")


class MetricsLog:
    """Appends rows to ``metrics.csv``; the header is written once."""

    def __init__(self, path: Path) -> None:
        self._path = path

    @property
    def path(self) -> Path:
        return self._path

    def append(self, **row: Any) -> None:
        unknown = set(row) - set(COLUMNS)
        if unknown:
            raise ValueError(f"unknown metrics columns: {sorted(unknown)}")
        frame = pl.DataFrame([{col: row.get(col) for col in COLUMNS}], schema=SCHEMA)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        write_header = not self._path.exists() or self._path.stat().st_size == 0
        with self._path.open("a", encoding="utf-8", newline="") as handle:
            frame.write_csv(handle, include_header=write_header)

    def truncate_after(self, step: int) -> None:
        """Drop rows logged after ``step`` (used when resuming from an older checkpoint)."""
        if not self._path.exists():
            return
        frame = read_metrics(self._path).filter(pl.col("step") <= step)
        tmp = self._path.with_suffix(".csv.tmp")
        frame.write_csv(tmp)
        tmp.replace(self._path)


def read_metrics(path: Path) -> pl.DataFrame:
    try:
        return pl.read_csv(path, schema=SCHEMA)
    except (OSError, pl.exceptions.PolarsError) as exc:
        raise DataError(f"cannot read metrics file {path}: {exc}") from exc


def summarize(paths: Sequence[Path], split: str = "valid") -> pl.DataFrame:
    """Average each run's final-epoch ``split`` row across runs.

    Returns one row with ``runs`` and the mean of every score column (null
    where no run reported it).
    """
    if not paths:
        raise DataError("summarize needs at least one metrics file")
    finals = []
    for path in paths:
        frame = read_metrics(path).filter(pl.col("split") == split)
        if frame.is_empty():
            raise DataError(f"{path}: no rows for split {split!r}")
        last_epoch = frame["epoch"].max()
        finals.append(frame.filter(pl.col("epoch") == last_epoch).tail(1))
    stacked = pl.concat(finals)
    return stacked.select(
        pl.lit(split).alias("split"),
        pl.len().alias("runs"),
        pl.col("epoch").max().alias("epoch"),
        *(pl.col(col).mean().alias(col) for col in SCORE_COLUMNS),
    )
