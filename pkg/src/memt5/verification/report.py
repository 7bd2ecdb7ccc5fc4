"""Oracle comparison results and their CSV form."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import polars as pl

REPORT_SCHEMA: dict[str, Any] = {
    "case_id": pl.Utf8,
    "max_abs_diff": pl.Float64,
    "max_rel_diff": pl.Float64,
    "tolerance": pl.Float64,
    "passed": pl.Boolean,
    "runtime_s": pl.Float64,
    "detail": pl.Utf8,
}


@dataclass(frozen=True, slots=True)
class OracleReport:
    """One comparison; ``passed`` holds exactly when ``max_rel_diff <= tolerance``."""

    case_id: str
    max_abs_diff: float
    max_rel_diff: float
    tolerance: float
    runtime_s: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_diff <= self.tolerance)

    def as_row(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}


def relative_difference(actual: np.ndarray, expected: np.ndarray) -> tuple[float, float]:
    """``(max |a - e|, max |a - e| / max |e|)``; the norm-wise relative error."""
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    if a.shape != e.shape:
        return float("inf"), float("inf")
    if a.size == 0:
        return 0.0, 0.0
    max_abs = float(np.max(np.abs(a - e)))
    scale = float(np.max(np.abs(e)))
    if not np.isfinite(max_abs):
        return float("inf"), float("inf")
    if scale == 0.0:
        return max_abs, 0.0 if max_abs == 0.0 else float("inf")
    return max_abs, max_abs / scale


def compare(
    case_id: str,
    actual: np.ndarray,
    expected: np.ndarray,
    tolerance: float,
    runtime_s: float = 0.0,
    detail: str = "",
) -> OracleReport:
    max_abs, max_rel = relative_difference(actual, expected)
    return OracleReport(case_id, max_abs, max_rel, tolerance, runtime_s, detail)


def reports_frame(reports: Sequence[OracleReport]) -> pl.DataFrame:
    return pl.DataFrame([r.as_row() for r in reports], schema=REPORT_SCHEMA)


def write_reports(reports: Sequence[OracleReport], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    reports_frame(reports).write_csv(tmp)
    tmp.replace(path)
