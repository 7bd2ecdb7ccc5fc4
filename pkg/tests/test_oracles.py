"""Tests for memt5.verification.oracles and report modules."""

from pathlib import Path

import numpy as np
import polars as pl
import pytest

from memt5.model.memory import build_mem_attention_mask
from memt5.verification import (
    OracleReport,
    baseline_reduction_case,
    compare,
    cost_reports,
    cost_sweep,
    count_attention_cost,
    dense_attention_oracle,
    mem_attention_case,
    oracle_sweep,
    reports_frame,
    write_reports,
)
from memt5.verification.oracles import selector_case, ws_case
from memt5.verification.report import relative_difference


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TestDenseOracle:
    def test_matches_vectorized_single_head(self, rng: np.random.Generator) -> None:
        x = rng.standard_normal((4, 6))
        w_q, w_k, w_v, w_o = (rng.standard_normal((6, 6)) for _ in range(4))
        mask = np.tril(np.ones((4, 4), dtype=bool))

        scores = (x @ w_q) @ (x @ w_k).T
        scores = np.where(mask, scores, -np.inf)
        expected = _softmax(scores) @ (x @ w_v) @ w_o

        actual = dense_attention_oracle(x, w_q, w_k, w_v, w_o, mask, num_heads=1)
        np.testing.assert_allclose(actual, expected, rtol=1e-10, atol=1e-10)

    def test_memory_rows_use_their_own_query(self, rng: np.random.Generator) -> None:
        x = rng.standard_normal((3, 4))
        w_q, w_k, w_v, w_o, w_q_mem = (rng.standard_normal((4, 4)) for _ in range(5))
        mask = np.ones((3, 3), dtype=bool)
        rows = np.array([True, False, False])
        plain = dense_attention_oracle(x, w_q, w_k, w_v, w_o, mask, 2)
        mixed = dense_attention_oracle(
            x, w_q, w_k, w_v, w_o, mask, 2, w_q_mem=w_q_mem, memory_rows=rows
        )
        np.testing.assert_array_equal(mixed[1:], plain[1:])
        assert not np.allclose(mixed[0], plain[0])

    def test_row_without_keys(self) -> None:
        w = np.eye(2)
        mask = np.array([[True, False], [False, False]])
        with pytest.raises(ValueError, match="row 1"):
            dense_attention_oracle(np.ones((2, 2)), w, w, w, w, mask, num_heads=1)

    def test_block_mask_changes_output(self, rng: np.random.Generator) -> None:
        x = rng.standard_normal((6, 4))
        w_q, w_k, w_v, w_o = (rng.standard_normal((4, 4)) for _ in range(4))
        dense = dense_attention_oracle(x, w_q, w_k, w_v, w_o, np.ones((6, 6), dtype=bool), 2)
        blocked = dense_attention_oracle(
            x, w_q, w_k, w_v, w_o, build_mem_attention_mask(2, 2, 1), 2
        )
        assert not compare("blocked", blocked, dense, 1e-5).passed


class TestEquivalenceCases:
    @pytest.mark.parametrize(
        ("n", "chunk_len", "mem_tokens"), [(1, 4, 0), (1, 4, 2), (2, 4, 1), (3, 2, 2), (4, 8, 1)]
    )
    def test_mem_attention(self, n: int, chunk_len: int, mem_tokens: int) -> None:
        report = mem_attention_case(n, chunk_len, mem_tokens)
        assert report.passed, report
        assert report.max_rel_diff < 1e-9

    @pytest.mark.parametrize(("n", "mem_tokens"), [(1, 1), (2, 0), (2, 2), (4, 1)])
    def test_selector(self, n: int, mem_tokens: int) -> None:
        report = selector_case(n, 4, mem_tokens)
        assert report.passed, report

    @pytest.mark.parametrize(("n", "mem_tokens"), [(1, 1), (3, 2)])
    def test_ws_cross_attention(self, n: int, mem_tokens: int) -> None:
        assert ws_case(n, mem_tokens).passed

    def test_small_sweep(self) -> None:
        reports = oracle_sweep(ns=(1, 2), chunk_lens=(4,), mem_tokens=(0, 1))
        assert len(reports) == 10
        assert all(r.passed for r in reports)
        assert len({r.case_id for r in reports}) == len(reports)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_baseline_reduction(self, seed: int) -> None:
        report = baseline_reduction_case(seed)
        assert report.passed, report
        assert report.tolerance == 1e-6


class TestAttentionCost:
    def test_reported_layout(self) -> None:
        cost = count_attention_cost(4, 128, 2)
        assert cost.allowed == 67_648
        assert cost.dense == 270_400
        assert cost.ratio == pytest.approx(0.2502, abs=1e-4)

    def test_single_chunk_is_dense(self) -> None:
        cost = count_attention_cost(1, 512, 0)
        assert cost.allowed == cost.dense == 512**2

    def test_sweep_ratio_falls(self) -> None:
        costs = cost_sweep()
        assert [c.n_chunks for c in costs] == [1, 2, 4, 8, 16]
        ratios = [c.ratio for c in costs]
        assert ratios == sorted(ratios, reverse=True)
        assert all(r.passed for r in cost_reports(costs))

    def test_rising_ratio_is_reported(self) -> None:
        costs = list(reversed(cost_sweep(ns=(1, 4))))
        trend = cost_reports(costs)[-1]
        assert trend.case_id == "cost/monotone_ratio"
        assert not trend.passed

    def test_indivisible_source(self) -> None:
        with pytest.raises(ValueError, match="divisible"):
            cost_sweep(source_len=510, ns=(4,))

    def test_invalid_layout(self) -> None:
        with pytest.raises(ValueError):
            count_attention_cost(0, 8, 1)


class TestReports:
    def test_relative_difference(self) -> None:
        assert relative_difference(np.array([1.0, 2.0]), np.array([1.0, 4.0])) == (2.0, 0.5)
        assert relative_difference(np.zeros(2), np.zeros(2)) == (0.0, 0.0)
        assert relative_difference(np.ones(2), np.zeros(2)) == (1.0, float("inf"))
        assert relative_difference(np.ones(2), np.ones(3))[1] == float("inf")
        assert relative_difference(np.array([np.nan]), np.ones(1))[1] == float("inf")

    def test_passed_boundary(self) -> None:
        assert OracleReport("a", 1.0, 1e-5, 1e-5).passed
        assert not OracleReport("a", 1.0, 2e-5, 1e-5).passed

    def test_csv_written_atomically(self, tmp_path: Path) -> None:
        reports = [OracleReport("a", 0.0, 0.0, 1e-5), OracleReport("b", 1.0, 1.0, 0.0, detail="x")]
        path = tmp_path / "out" / "oracle_reports.csv"
        write_reports(reports, path)
        assert not path.with_suffix(".csv.tmp").exists()
        frame = pl.read_csv(path)
        assert frame.columns == reports_frame(reports).columns
        assert frame["passed"].to_list() == [True, False]
        assert frame["case_id"].to_list() == ["a", "b"]
