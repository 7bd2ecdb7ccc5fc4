"""The ``verify`` sweep: every architectural claim checked in one call.

Example:
    reports = run_verification_suite()
    write_reports(reports, Path("runs/verify/oracle_reports.csv"))
    failed = [r for r in reports if not r.passed]
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable

from memt5.events import EVENT_ORACLE_CASE_COMPLETED
from memt5.verification.gradcheck import run_gradchecks
from memt5.verification.oracles import (
    baseline_reduction_sweep,
    cost_reports,
    cost_sweep,
    oracle_sweep,
)
from memt5.verification.probes import reachability_sweep
from memt5.verification.report import OracleReport

logger = logging.getLogger(__name__)

REPORTS_FILENAME = "oracle_reports.csv"


def _logged(reports: Iterable[OracleReport]) -> list[OracleReport]:
    collected = []
    for report in reports:
        logger.info(
            "oracle case completed",
            extra={
                "event": EVENT_ORACLE_CASE_COMPLETED,
                "case_id": report.case_id,
                "passed": report.passed,
                "max_rel_diff": report.max_rel_diff,
            },
        )
        collected.append(report)
    return collected


def run_verification_suite(
    seed: int = 0,
    *,
    reduction_draws: int = 20,
    progress: Callable[[str], None] | None = None,
) -> list[OracleReport]:
    """Oracle equivalence, baseline reduction, attention cost and reachability reports."""
    stages: list[tuple[str, Callable[[], list[OracleReport]]]] = [
        ("oracles", lambda: oracle_sweep(seed=seed)),
        ("baseline reduction", lambda: baseline_reduction_sweep(reduction_draws)),
        ("attention cost", lambda: cost_reports(cost_sweep())),
        ("reachability", lambda: reachability_sweep(seed)),
    ]
    reports: list[OracleReport] = []
    for name, stage in stages:
        if progress is not None:
            progress(name)
        reports.extend(_logged(stage()))
    return reports


def run_gradcheck_suite(full: bool = False, seed: int = 0) -> list[OracleReport]:
    return _logged(run_gradchecks(full=full, seed=seed))
