"""Tests for memt5.verification.gradcheck module."""

import numpy as np
import pytest

from memt5.autograd import Tensor, precision
from memt5.autograd import functional as F
from memt5.config import MIN_VOCAB_SIZE
from memt5.verification import LAYER_CASES, MODEL_CASES, gradcheck, run_gradchecks
from memt5.verification.gradcheck import GradcheckCase, check_indices, run_case


class TestGradcheck:
    def test_correct_gradient_passes(self, float64: None, rng: np.random.Generator) -> None:
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)

        report = gradcheck(lambda: F.sum(F.logsumexp(F.matmul(x, w), axis=-1)), {"x": x, "w": w})
        assert report.passed, report
        assert report.max_abs_diff < 1e-8

    def test_detached_factor_is_caught(self, float64: None, rng: np.random.Generator) -> None:
        x = Tensor(rng.standard_normal(5) + 2.0, requires_grad=True)

        def loss() -> Tensor:
            return F.sum(F.mul(x, Tensor(x.data.copy())))

        report = gradcheck(loss, {"x": x}, case_id="detached")
        assert not report.passed
        assert report.max_rel_diff == pytest.approx(0.5, rel=1e-4)
        assert report.detail.startswith("x[")

    def test_data_and_grads_restored(self, float64: None, rng: np.random.Generator) -> None:
        x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        before = x.data.copy()
        gradcheck(lambda: F.sum(F.mul(x, x)), {"x": x})
        np.testing.assert_array_equal(x.data, before)
        assert x.grad is None

    def test_sampled_checks(self, float64: None, rng: np.random.Generator) -> None:
        table = Tensor(rng.standard_normal((50, 4)), requires_grad=True)
        calls = 0

        def loss() -> Tensor:
            nonlocal calls
            calls += 1
            return F.sum(F.mul(table, table))

        report = gradcheck(loss, {"table": table}, max_checks_per_tensor=5)
        assert report.passed
        assert calls <= 1 + 2 * 5

    def test_check_indices_sample_keeps_largest_gradient(self, rng: np.random.Generator) -> None:
        grad = np.zeros(40)
        grad[17] = -3.0
        picked = check_indices(grad, 4, rng)
        assert len(picked) <= 4
        assert 17 in picked
        np.testing.assert_array_equal(check_indices(grad, None, rng), np.arange(40))


class TestNamedCases:
    @pytest.mark.parametrize("case", LAYER_CASES, ids=lambda c: c.case_id)
    def test_layer_case(self, case: GradcheckCase) -> None:
        report = run_case(case)
        assert report.passed, report

    @pytest.mark.parametrize("case", LAYER_CASES + MODEL_CASES, ids=lambda c: c.case_id)
    def test_every_element_is_checked(self, case: GradcheckCase) -> None:
        rng = np.random.default_rng(0)
        with precision("float64"):
            _, tensors = case.build(rng)
        checked = sum(
            len(check_indices(np.zeros_like(t.data), case.max_checks_per_tensor, rng))
            for t in tensors.values()
        )
        assert case.max_checks_per_tensor is None
        assert checked == sum(t.data.size for t in tensors.values())

    @pytest.mark.parametrize("case", MODEL_CASES, ids=lambda c: c.case_id)
    def test_model_cases_cover_embedding_tables(self, case: GradcheckCase) -> None:
        with precision("float64"):
            _, tensors = case.build(np.random.default_rng(0))
        tables = [name for name, t in tensors.items() if t.shape[0] == MIN_VOCAB_SIZE]
        assert tables
        assert case.max_checks_per_tensor is None

    def test_layer_sweep_ids(self) -> None:
        reports = run_gradchecks()
        assert [r.case_id for r in reports] == [c.case_id for c in LAYER_CASES]

    @pytest.mark.slow
    @pytest.mark.parametrize("case", MODEL_CASES, ids=lambda c: c.case_id)
    def test_model_case(self, case: GradcheckCase) -> None:
        report = run_case(case)
        assert report.passed, report
