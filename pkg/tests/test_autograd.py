"""Tests for memt5.autograd (tensor core and functional kernels)."""

import math
from collections.abc import Callable

import numpy as np
import pytest

from memt5.autograd import Graph, Tensor, backward, default_dtype, grad_enabled, no_grad, precision
from memt5.autograd import functional as F
from memt5.exceptions import AttentionMaskError, DataError, NumericalError, ShapeError
from memt5.verification.gradcheck import gradcheck


class TestTensorBasics:
    def test_default_dtype_is_float32(self) -> None:
        assert default_dtype() is np.float32
        assert Tensor([1.0, 2.0]).dtype == np.float32

    def test_precision_context_switches_and_restores(self) -> None:
        with precision("float64"):
            assert Tensor([1.0]).dtype == np.float64
        assert Tensor([1.0]).dtype == np.float32

    def test_unknown_precision_rejected(self) -> None:
        with pytest.raises(ValueError, match="unknown precision"):
            with precision("float16"):
                pass

    def test_no_grad_builds_no_graph(self) -> None:
        x = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            assert not grad_enabled()
            y = F.mul(x, x)
        assert grad_enabled()
        assert not y.requires_grad
        assert y.is_leaf

    def test_item_and_repr(self) -> None:
        t = Tensor([[3.5]], name="w")
        assert t.item() == 3.5
        assert "name='w'" in repr(t)


class TestBackward:
    def test_broadcast_gradient_is_reduced(self) -> None:
        a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        b = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(F.sum(F.mul(a, b)))
        np.testing.assert_allclose(b.grad, a.data.sum(axis=0))
        np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (2, 3)))

    def test_shared_input_accumulates(self) -> None:
        x = Tensor([3.0], requires_grad=True)
        graph = backward(F.sum(F.mul(x, x)))
        np.testing.assert_allclose(x.grad, [6.0])
        assert isinstance(graph, Graph)
        assert len({id(node) for node in graph.nodes}) == len(graph)

    def test_repeated_backward_adds_into_leaf_grad(self) -> None:
        x = Tensor([1.0, -2.0], requires_grad=True)
        backward(F.sum(x * 2.0))
        backward(F.sum(x * 2.0))
        np.testing.assert_allclose(x.grad, [4.0, 4.0])

    def test_non_scalar_loss_rejected(self) -> None:
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            backward(x * 2.0)

    def test_loss_without_grad_rejected(self) -> None:
        with pytest.raises(ValueError, match="requires_grad"):
            backward(F.sum(Tensor([1.0])))

    def test_operator_overloads_match_functions(self) -> None:
        a = Tensor([2.0, 4.0])
        b = Tensor([1.0, 2.0])
        np.testing.assert_allclose((a + b).data, [3.0, 6.0])
        np.testing.assert_allclose((a - b).data, [1.0, 2.0])
        np.testing.assert_allclose((a / b).data, [2.0, 2.0])
        np.testing.assert_allclose((1.0 - a).data, [-1.0, -3.0])
        np.testing.assert_allclose((-a).data, [-2.0, -4.0])


class TestKernels:
    def test_masked_softmax_values(self) -> None:
        probs = F.masked_softmax(Tensor([[0.0, 1.0]]), np.array([[True, True]]))
        np.testing.assert_allclose(probs.data, [[0.2689, 0.7311]], atol=1e-4)

    def test_masked_key_gets_exactly_zero(self) -> None:
        probs = F.masked_softmax(Tensor([[5.0, 1.0, 2.0]]), np.array([[False, True, True]]))
        assert probs.data[0, 0] == 0.0
        assert probs.data.sum() == pytest.approx(1.0, abs=1e-6)

    def test_fully_masked_row_raises(self) -> None:
        with pytest.raises(AttentionMaskError):
            F.masked_softmax(Tensor([[1.0, 2.0]]), np.array([[False, False]]))

    def test_mask_shape_mismatch_raises(self) -> None:
        with pytest.raises(ShapeError):
            F.masked_softmax(Tensor(np.zeros((2, 3))), np.ones((2, 4), dtype=bool))

    def test_rms_norm_values(self) -> None:
        out = F.rms_norm(Tensor([[3.0, 4.0]]), Tensor([1.0, 1.0]))
        np.testing.assert_allclose(out.data, [[0.8485, 1.1314]], atol=1e-4)

    def test_rms_norm_gamma_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            F.rms_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))

    def test_uniform_cross_entropy_is_log_vocab(self) -> None:
        loss = F.cross_entropy_mean(Tensor(np.zeros((1, 32000))), np.array([5]))
        assert loss.item() == pytest.approx(math.log(32000), abs=1e-4)
        assert loss.item() == pytest.approx(10.3735, abs=1e-4)

    def test_cross_entropy_ignores_masked_positions(self) -> None:
        logits = Tensor(np.array([[0.0, 0.0], [10.0, -10.0]]))
        both = F.cross_entropy_mean(logits, np.array([0, 1])).item()
        first = F.cross_entropy_mean(logits, np.array([0, -100])).item()
        assert first == pytest.approx(math.log(2), abs=1e-5)
        assert both > first

    def test_cross_entropy_all_ignored_raises(self) -> None:
        with pytest.raises(DataError):
            F.cross_entropy_mean(Tensor(np.zeros((2, 4))), np.array([-100, -100]))

    def test_logsumexp(self) -> None:
        out = F.logsumexp(Tensor([[0.0, math.log(3.0)]]), axis=-1)
        assert out.data[0] == pytest.approx(math.log(4.0), abs=1e-6)

    def test_matmul_mismatch_is_shape_error(self) -> None:
        with pytest.raises(ShapeError) as info:
            F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        assert isinstance(info.value, ValueError)

    def test_embedding_gradient_scatter_adds(self) -> None:
        table = Tensor(np.zeros((4, 2)), requires_grad=True)
        backward(F.sum(F.embedding_lookup(table, np.array([0, 0, 2]))))
        np.testing.assert_allclose(table.grad, [[2, 2], [0, 0], [1, 1], [0, 0]])

    def test_embedding_out_of_range(self) -> None:
        with pytest.raises(ShapeError):
            F.embedding_lookup(Tensor(np.zeros((4, 2))), np.array([4]))

    def test_dropout_identity_in_eval(self) -> None:
        x = Tensor(np.ones(10))
        assert F.dropout(x, 0.5, training=False) is x
        assert F.dropout(x, 0.0, training=True) is x

    def test_dropout_needs_rng(self) -> None:
        with pytest.raises(ValueError, match="rng"):
            F.dropout(Tensor(np.ones(3)), 0.5, training=True)

    def test_dropout_scales_kept_units(self) -> None:
        out = F.dropout(Tensor(np.ones(1000)), 0.5, training=True, rng=np.random.default_rng(0))
        assert set(np.unique(out.data)) <= {0.0, 2.0}
        assert 350 < int((out.data > 0).sum()) < 650

    def test_take_split_concat_roundtrip(self) -> None:
        x = Tensor(np.arange(12.0).reshape(3, 4))
        parts = F.split(x, [1, 3], axis=1)
        np.testing.assert_array_equal(F.concat(parts, axis=1).data, x.data)
        np.testing.assert_array_equal(F.take(x, 1, 3, axis=0).data, x.data[1:3])

    def test_take_out_of_range(self) -> None:
        with pytest.raises(ShapeError):
            F.take(Tensor(np.zeros((2, 2))), 1, 3, axis=0)

    def test_debug_checks_catch_overflow(self) -> None:
        with np.errstate(over="ignore"), pytest.raises(NumericalError, match="exp"):
            F.exp(Tensor([1000.0]))


class TestKernelGradients:
    """Finite-difference checks of individual kernels in float64."""

    @pytest.mark.parametrize(
        "build",
        [
            pytest.param(lambda x, w: F.sum(F.mul(F.relu(x), w)), id="relu"),
            pytest.param(lambda x, w: F.sum(F.mul(F.exp(x), w)), id="exp"),
            pytest.param(lambda x, w: F.sum(F.mul(F.div(x, 2.5), w)), id="div"),
            pytest.param(lambda x, w: F.sum(F.logsumexp(F.mul(x, w), axis=-1)), id="logsumexp"),
            pytest.param(
                lambda x, w: F.sum(F.mul(F.transpose(x, (1, 0)), F.transpose(w, (1, 0)))),
                id="transpose",
            ),
            pytest.param(
                lambda x, w: F.sum(F.mul(F.masked_softmax(x, np.tri(3, 4, 1, dtype=bool)), w)),
                id="masked_softmax",
            ),
            pytest.param(
                lambda x, w: F.sum(F.mul(F.rms_norm(x, Tensor(np.linspace(0.5, 1.5, 4))), w)),
                id="rms_norm",
            ),
            pytest.param(
                lambda x, w: F.mean(F.mul(F.expand(F.take(x, 0, 1, 0), (3, 4)), w)),
                id="expand",
            ),
        ],
    )
    def test_kernel_gradient(
        self, float64: None, build: Callable[[Tensor, Tensor], Tensor]
    ) -> None:
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((3, 4)) + 0.1)
        w = Tensor(rng.standard_normal((3, 4)))
        report = gradcheck(lambda: build(x, w), {"x": x}, case_id="kernel")
        assert report.passed, report.detail

    def test_matmul_gradient(self, float64: None) -> None:
        rng = np.random.default_rng(4)
        a = Tensor(rng.standard_normal((2, 3, 4)))
        b = Tensor(rng.standard_normal((4, 5)))
        report = gradcheck(lambda: F.sum(F.matmul(a, b) * 0.5), {"a": a, "b": b})
        assert report.passed, report.detail

    def test_cross_entropy_gradient(self, float64: None) -> None:
        logits = Tensor(np.random.default_rng(5).standard_normal((4, 6)))
        targets = np.array([1, -100, 5, 0])
        report = gradcheck(lambda: F.cross_entropy_mean(logits, targets), {"logits": logits})
        assert report.passed, report.detail

    def test_corrupted_backward_is_caught(self, float64: None) -> None:
        x = Tensor(np.random.default_rng(6).standard_normal(5))

        def wrong_square() -> Tensor:
            out = x.data**2
            return F.sum(Tensor._from_op(out, (x,), lambda g: (g * 3.0 * x.data,), "bad_square"))

        report = gradcheck(wrong_square, {"x": x})
        assert not report.passed
