"""Tests for memt5.verification.probes module."""

import numpy as np
import pytest

from memt5.autograd import precision
from memt5.model.memory import chunk_sequences
from memt5.verification import reachability_case, reachability_probe, reachability_sweep
from memt5.verification.probes import probe_model


def _influence(num_layers: int, mem_tokens: int, n_chunks: int = 2) -> np.ndarray:
    with precision("float64"):
        model = probe_model(num_layers, mem_tokens, n_chunks=n_chunks)
        ids = np.random.default_rng(0).integers(3, 259, size=(1, n_chunks * 4)).tolist()
        batch = chunk_sequences(ids, chunk_len=4, n_chunks=n_chunks)
        return reachability_probe(model, batch)


class TestReachabilityProbe:
    def test_one_layer_keeps_chunks_apart(self) -> None:
        influence = _influence(num_layers=1, mem_tokens=2, n_chunks=3)
        assert influence.shape == (3, 3)
        assert np.all(np.diag(influence) > 0)
        np.testing.assert_array_equal(influence[~np.eye(3, dtype=bool)], 0.0)

    def test_two_layers_carry_through_memory(self) -> None:
        influence = _influence(num_layers=2, mem_tokens=1, n_chunks=3)
        assert np.all(influence > 0)

    def test_no_memory_means_no_flow(self) -> None:
        influence = _influence(num_layers=3, mem_tokens=0)
        assert influence[0, 1] == 0.0
        assert influence[1, 0] == 0.0

    def test_restores_training_mode(self) -> None:
        model = probe_model(1, 1)
        batch = chunk_sequences([[5, 6, 7, 8, 9, 10, 11, 12]], chunk_len=4, n_chunks=2)
        reachability_probe(model, batch)
        assert model.training


class TestReachabilityCases:
    @pytest.mark.parametrize(
        ("num_layers", "mem_tokens"), [(1, 0), (1, 2), (2, 0), (2, 1), (3, 2)]
    )
    def test_case_passes(self, num_layers: int, mem_tokens: int) -> None:
        report = reachability_case(num_layers, mem_tokens)
        assert report.passed, report
        assert report.case_id == f"reachability/layers={num_layers}/M={mem_tokens}/n=2"

    def test_single_chunk_has_no_cross_flow(self) -> None:
        assert reachability_case(2, 1, n_chunks=1).passed

    def test_sweep_grid(self) -> None:
        reports = reachability_sweep()
        assert len(reports) == 9
        assert all(r.passed for r in reports)
