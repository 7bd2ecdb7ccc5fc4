"""Central finite-difference checks of the analytic gradients.

:func:`gradcheck` compares ``backward`` against ``(f(x + eps) - f(x - eps)) / 2 eps``
for chosen tensors. The per-element error is
``|analytic - numeric| / max(|analytic|, |numeric|, floor)``, so gradients
far below ``floor`` are judged on their absolute error.

Large tensors can be sampled with ``max_checks_per_tensor``; the sample always
includes the element with the largest analytic gradient. The named cases never
sample: every element of every tensor is perturbed.

The named cases cover each layer type at ``d_model=16`` and, with
``full=True``, every model variant end to end at ``d_model=8`` over the
smallest vocabulary (bytes, control tokens and sentinels). All of them run in
float64 with dropout disabled.
"""

from __future__ import annotations

import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from memt5.autograd import Tensor, backward, no_grad, precision
from memt5.autograd import functional as F
from memt5.config import MIN_VOCAB_SIZE, ModelConfig, Variant
from memt5.model.layers import (
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    RelativePositionBias,
    RMSNorm,
    causal_mask,
)
from memt5.model.memory import (
    ChunkLayout,
    EncoderOutput,
    MemoryBank,
    build_mem_attention_mask,
    chunk_sequences,
    mem_attention,
    selector_cross_attention,
    ws_cross_attention,
)
from memt5.model.seq2seq import Seq2SeqModel
from memt5.verification.report import OracleReport

GRAD_TOLERANCE = 1e-4
GRAD_EPS = 1e-5
ERROR_FLOOR = 1e-3


def check_indices(grad: np.ndarray, max_checks: int | None, rng: np.random.Generator) -> np.ndarray:
    """Flat indices to perturb: all of them, or a sample that keeps the largest gradient."""
    size = grad.size
    if max_checks is None or size <= max_checks:
        return np.arange(size)
    picked = rng.choice(size, size=max_checks - 1, replace=False)
    return np.unique(np.append(picked, int(np.argmax(np.abs(grad)))))


def gradcheck(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    *,
    case_id: str = "gradcheck",
    eps: float = GRAD_EPS,
    tolerance: float = GRAD_TOLERANCE,
    max_checks_per_tensor: int | None = None,
    seed: int = 0,
) -> OracleReport:
    """Check ``d loss_fn() / d tensor`` for every tensor in ``tensors``.

    ``loss_fn`` must rebuild the graph from the tensors' current ``data`` on
    every call and return a scalar.
    """
    started = time.perf_counter()
    for t in tensors.values():
        t.requires_grad = True
        t.zero_grad()
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)
    backward(loss_fn())
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in tensors.items()
    }
    rng = np.random.default_rng(seed)

    max_abs = 0.0
    max_rel = 0.0
    worst = ""
    with no_grad():
        for name, t in tensors.items():
            grad = analytic[name]
            flat = t.data.reshape(-1)
            for index in check_indices(grad, max_checks_per_tensor, rng):
                original = flat[index]
                flat[index] = original + eps
                plus = loss_fn().item()
                flat[index] = original - eps
                minus = loss_fn().item()
                flat[index] = original
                numeric = (plus - minus) / (2.0 * eps)
                exact = float(grad.reshape(-1)[index])
                diff = abs(exact - numeric)
                rel = diff / max(abs(exact), abs(numeric), ERROR_FLOOR)
                max_abs = max(max_abs, diff)
                if rel > max_rel:
                    max_rel = rel
                    worst = f"{name}[{int(index)}] analytic={exact:.6g} numeric={numeric:.6g}"
    for t in tensors.values():
        t.zero_grad()
    return OracleReport(
        case_id=case_id,
        max_abs_diff=max_abs,
        max_rel_diff=max_rel,
        tolerance=tolerance,
        runtime_s=time.perf_counter() - started,
        detail=worst,
    )


# ----- named cases -----------------------------------------------------------

D_MODEL = 16
NUM_HEADS = 2
D_KV = 8

# whole-model cases perturb every element of every parameter
MODEL_D_MODEL = 8
MODEL_D_KV = 4


@dataclass(frozen=True, slots=True)
class GradcheckCase:
    case_id: str
    build: Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict[str, Tensor]]]
    max_checks_per_tensor: int | None = None


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    """A random fixed projection so every output element gets a distinct gradient."""
    weights = Tensor(rng.standard_normal(out.shape))
    return lambda y: F.sum(F.mul(y, weights))


def _params(prefix: str, module: Module) -> dict[str, Tensor]:
    return {f"{prefix}.{name}": p for name, p in module.named_parameters()}


def _linear_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    layer = Linear(D_MODEL, 8, rng, D_MODEL**-0.5)
    x = Tensor(rng.standard_normal((3, D_MODEL)), requires_grad=True)
    reduce = _weighted_sum(layer(x), rng)
    return (lambda: reduce(layer(x))), {"x": x, **_params("linear", layer)}


def _rms_norm_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    norm = RMSNorm(D_MODEL)
    norm.weight.data = 1.0 + 0.1 * rng.standard_normal(D_MODEL)
    x = Tensor(rng.standard_normal((2, 3, D_MODEL)), requires_grad=True)
    reduce = _weighted_sum(norm(x), rng)
    return (lambda: reduce(norm(x))), {"x": x, **_params("norm", norm)}


def _feed_forward_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    ffn = FeedForward(D_MODEL, 32, 0.0, rng)
    ffn.eval()
    x = Tensor(rng.standard_normal((3, D_MODEL)), requires_grad=True)
    reduce = _weighted_sum(ffn(x), rng)
    return (lambda: reduce(ffn(x))), {"x": x, **_params("ffn", ffn)}


def _attention_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    attention = MultiHeadAttention(D_MODEL, NUM_HEADS, D_KV, 0.0, rng)
    attention.eval()
    bias = RelativePositionBias(NUM_HEADS, 8, 16, bidirectional=False, rng=rng, std=0.5)
    x = Tensor(rng.standard_normal((1, 5, D_MODEL)), requires_grad=True)
    mask = causal_mask(5)
    position = np.arange(5)

    def forward() -> Tensor:
        return attention(x, x, mask=mask, position_bias=bias(position, position))

    reduce = _weighted_sum(forward(), rng)
    params = {"x": x, **_params("attention", attention), **_params("bias", bias)}
    return (lambda: reduce(forward())), params


def _mem_attention_case(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
    attention = MultiHeadAttention(D_MODEL, NUM_HEADS, D_KV, 0.0, rng, mem_query=True)
    attention.eval()
    layout = ChunkLayout(2, 4, 1)
    pad = np.ones((1, 2, 4), dtype=bool)
    pad[0, 1, 3] = False
    mask = build_mem_attention_mask(2, 4, 1, pad)
    x = Tensor(rng.standard_normal((1, layout.length, D_MODEL)), requires_grad=True)

    def forward() -> Tensor:
        return mem_attention(x, attention, mask, layout)

    reduce = _weighted_sum(forward(), rng)
    return (lambda: reduce(forward())), {"x": x, **_params("attention", attention)}


def _cross_sources_case(
    selector: bool,
) -> Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
        attention = MultiHeadAttention(D_MODEL, NUM_HEADS, D_KV, 0.0, rng)
        attention.eval()
        queries = Tensor(rng.standard_normal((1, 3, D_MODEL)), requires_grad=True)
        chunks = Tensor(rng.standard_normal((1, 2, 4, D_MODEL)), requires_grad=True)
        memory = Tensor(rng.standard_normal((1, 2, 1, D_MODEL)), requires_grad=True)
        pad = np.ones((1, 2, 4), dtype=bool)
        pad[0, 1, 2:] = False

        def forward() -> Tensor:
            bank = MemoryBank(memory, None)
            if selector:
                return selector_cross_attention(
                    queries, EncoderOutput(chunks, bank, pad), attention
                )
            return ws_cross_attention(queries, bank, attention)

        reduce = _weighted_sum(forward(), rng)
        params = {"queries": queries, "memory": memory, **_params("attention", attention)}
        if selector:
            params["chunks"] = chunks
        return (lambda: reduce(forward())), params

    return build


def _model_case(
    variant: Variant,
) -> Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict[str, Tensor]]]:
    def build(rng: np.random.Generator) -> tuple[Callable[[], Tensor], dict[str, Tensor]]:
        baseline = variant is Variant.BASELINE
        config = ModelConfig(
            variant=variant,
            vocab_size=MIN_VOCAB_SIZE,
            d_model=MODEL_D_MODEL,
            num_heads=NUM_HEADS,
            d_kv=MODEL_D_KV,
            d_ff=16,
            num_layers=2,
            dropout=0.0,
            n_chunks=1 if baseline else 2,
            chunk_len=8 if baseline else 4,
            mem_tokens=0 if baseline else 1,
            rel_pos_buckets=8,
            rel_pos_max_distance=16,
        )
        model = Seq2SeqModel(config, seed=int(rng.integers(1 << 31)))
        model.eval()
        ids = rng.integers(3, 250, size=(2, 7)).tolist()
        ids[1] = ids[1][:5]
        batch = chunk_sequences(ids, chunk_len=config.chunk_len, n_chunks=config.n_chunks)
        labels = rng.integers(3, 250, size=(2, 3))
        labels[1, 2] = -100
        return (lambda: model.loss(batch, labels)), dict(model.named_parameters())

    return build


LAYER_CASES: tuple[GradcheckCase, ...] = (
    GradcheckCase("layer/linear", _linear_case),
    GradcheckCase("layer/rms_norm", _rms_norm_case),
    GradcheckCase("layer/feed_forward", _feed_forward_case),
    GradcheckCase("layer/attention_with_bias", _attention_case),
    GradcheckCase("layer/mem_attention", _mem_attention_case),
    GradcheckCase("layer/selector", _cross_sources_case(selector=True)),
    GradcheckCase("layer/ws_cross_attention", _cross_sources_case(selector=False)),
)

MODEL_CASES: tuple[GradcheckCase, ...] = tuple(
    GradcheckCase(f"model/{variant.value}", _model_case(variant)) for variant in Variant
)


def run_case(case: GradcheckCase, seed: int = 0) -> OracleReport:
    with precision("float64"):
        rng = np.random.default_rng(seed)
        loss_fn, tensors = case.build(rng)
        return gradcheck(
            loss_fn,
            tensors,
            case_id=case.case_id,
            max_checks_per_tensor=case.max_checks_per_tensor,
            seed=seed,
        )


def run_gradchecks(full: bool = False, seed: int = 0) -> list[OracleReport]:
    """Layer cases, plus every model variant when ``full``."""
    cases = LAYER_CASES + (MODEL_CASES if full else ())
    return [run_case(case, seed) for case in cases]
