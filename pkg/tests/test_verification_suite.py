"""Tests for memt5.verification.suite module."""

import logging
from pathlib import Path

import polars as pl
import pytest

from memt5.events import EVENT_ORACLE_CASE_COMPLETED
from memt5.verification import (
    REPORTS_FILENAME,
    run_gradcheck_suite,
    run_verification_suite,
    write_reports,
)


class TestVerificationSuite:
    def test_every_stage_passes(self, tmp_path: Path, caplog: pytest.LogCaptureFixture) -> None:
        stages: list[str] = []
        with caplog.at_level(logging.INFO, logger="memt5"):
            reports = run_verification_suite(reduction_draws=2, progress=stages.append)

        assert stages == ["oracles", "baseline reduction", "attention cost", "reachability"]
        failed = [r for r in reports if not r.passed]
        assert failed == []
        prefixes = {r.case_id.split("/")[0] for r in reports}
        assert prefixes == {
            "mem_attention",
            "selector",
            "ws_cross",
            "baseline_reduction",
            "cost",
            "reachability",
        }
        events = [getattr(r, "event", "") for r in caplog.records]
        assert events.count(EVENT_ORACLE_CASE_COMPLETED) == len(reports)

        path = tmp_path / REPORTS_FILENAME
        write_reports(reports, path)
        assert pl.read_csv(path).height == len(reports)

    def test_gradcheck_suite_layers_only(self) -> None:
        reports = run_gradcheck_suite()
        assert reports
        assert all(r.case_id.startswith("layer/") for r in reports)
        assert all(r.passed for r in reports)
