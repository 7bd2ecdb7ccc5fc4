"""Differentiable kernels.

Every function takes and returns :class:`~memt5.autograd.tensor.Tensor`
objects; integer indices and boolean masks are plain numpy arrays and never
receive gradients. Binary elementwise ops broadcast like numpy and reduce the
gradient back to each operand's shape.
"""

from __future__ import annotations

import builtins
from collections.abc import Sequence
from typing import Any

import numpy as np

from memt5.autograd.tensor import Tensor
from memt5.exceptions import AttentionMaskError, DataError, ShapeError

Operand = Tensor | float | int | np.ndarray


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _coerce(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype), dtype=a.dtype)
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype), dtype=b.dtype), b
    raise TypeError("at least one operand must be a Tensor")


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ----- elementwise -----------------------------------------------------------


def add(a: Operand, b: Operand) -> Tensor:
    x, y = _coerce(a, b)
    _check_broadcast(x, y, "add")

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return Tensor._from_op(x.data + y.data, (x, y), _backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    x, y = _coerce(a, b)
    _check_broadcast(x, y, "sub")

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return Tensor._from_op(x.data - y.data, (x, y), _backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    x, y = _coerce(a, b)
    _check_broadcast(x, y, "mul")

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)

    return Tensor._from_op(x.data * y.data, (x, y), _backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    x, y = _coerce(a, b)
    _check_broadcast(x, y, "div")

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gx = g / y.data
        gy = -g * x.data / (y.data * y.data)
        return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

    return Tensor._from_op(x.data / y.data, (x, y), _backward, "div")


def neg(x: Tensor) -> Tensor:
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,), "neg")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,), "exp")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return Tensor._from_op(
        np.where(positive, x.data, 0).astype(x.dtype), (x,), lambda g: (g * positive,), "relu"
    )


def dropout(
    x: Tensor, rate: float, *, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout: Bernoulli keep-mask scaled by 1/(1-rate).

    Identity (the same tensor object) when not training or rate == 0.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) * scale
    return Tensor._from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ----- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (leading axes broadcast)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch dimensions mismatch: {a.shape} @ {b.shape}") from None

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(np.matmul(a.data, b.data), (a, b), _backward, "matmul")


# ----- reductions ------------------------------------------------------------


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(a % ndim for a in axes)


def sum(  # noqa: A001
    x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False
) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    kept_shape = tuple(1 if i in axes else s for i, s in enumerate(x.shape))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(g.reshape(kept_shape), x.shape),)

    out = np.sum(x.data, axis=axes, keepdims=keepdims)
    return Tensor._from_op(np.asarray(out, dtype=x.dtype), (x,), _backward, "sum")


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    """Stable log-sum-exp over one axis (the axis is removed)."""
    axis = axis % x.ndim
    peak = np.max(x.data, axis=axis, keepdims=True)
    shifted = np.exp(x.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    out = (peak + np.log(total)).squeeze(axis)
    weights = shifted / total

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.expand_dims(g, axis) * weights,)

    return Tensor._from_op(out.astype(x.dtype), (x,), _backward, "logsumexp")


# ----- shape manipulation ----------------------------------------------------


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    perm = tuple(a % x.ndim for a in axes)
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError(f"transpose axes {tuple(axes)} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(perm))
    return Tensor._from_op(
        np.transpose(x.data, perm), (x,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    perm = list(range(x.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(x, perm)


def expand(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Broadcast ``x`` to ``shape``; the gradient sums over broadcast axes."""
    target = tuple(shape)
    try:
        out = np.broadcast_to(x.data, target)
    except ValueError:
        raise ShapeError(f"cannot expand {x.shape} to {target}") from None
    return Tensor._from_op(out, (x,), lambda g: (_unbroadcast(g, x.shape),), "expand")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis
        ):
            raise ShapeError(
                f"concat shape mismatch on axis {axis}: {tensors[0].shape} vs {t.shape}"
            )
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(out, tuple(tensors), _backward, "concat")


def take(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    axis = axis % x.ndim
    if not 0 <= start <= stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}, {stop}) out of range for axis {axis} of {x.shape}")
    index: list[Any] = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    key = tuple(index)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(x.shape, dtype=g.dtype)
        full[key] = g
        return (full,)

    return Tensor._from_op(x.data[key], (x,), _backward, "take")


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    axis = axis % x.ndim
    if builtins.sum(sizes) != x.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis {axis} of {x.shape}")
    parts: list[Tensor] = []
    start = 0
    for size in sizes:
        parts.append(take(x, start, start + size, axis=axis))
        start += size
    return parts


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table``; the gradient scatter-adds into the rows used."""
    index = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be rank 2, got {table.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding ids out of range [0, {table.shape[0]}): "
            f"min={int(index.min())} max={int(index.max())}"
        )

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(full, index.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return Tensor._from_op(table.data[index], (table,), _backward, "embedding")


# ----- normalization, attention, loss ----------------------------------------


def rms_norm(x: Tensor, gamma: Tensor, eps: float = 1e-6) -> Tensor:
    """y = gamma * x / sqrt(mean(x^2) + eps); no mean subtraction, no bias."""
    if gamma.ndim != 1 or x.shape[-1] != gamma.shape[0]:
        raise ShapeError(f"rms_norm: last dim of {x.shape} does not match gamma {gamma.shape}")
    inv_rms = 1.0 / np.sqrt(np.mean(x.data * x.data, axis=-1, keepdims=True) + eps)
    normed = x.data * inv_rms

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g_normed = g * gamma.data
        gx = inv_rms * (g_normed - normed * np.mean(g_normed * normed, axis=-1, keepdims=True))
        ggamma = (g * normed).reshape(-1, gamma.shape[0]).sum(axis=0)
        return gx, ggamma

    out = (normed * gamma.data).astype(x.dtype)
    return Tensor._from_op(out, (x, gamma), _backward, "rms_norm")


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis with masked keys at exactly zero probability.

    ``mask`` is boolean and broadcastable to ``scores``; True means allowed.
    Every row must admit at least one key.
    """
    try:
        allowed = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    except ValueError:
        raise ShapeError(
            f"mask shape {np.shape(mask)} does not broadcast to scores {scores.shape}"
        ) from None
    row_ok = allowed.any(axis=-1)
    if not row_ok.all():
        bad = np.argwhere(~row_ok)[0]
        raise AttentionMaskError(f"attention row {tuple(int(i) for i in bad)} has no allowed key")

    masked = np.where(allowed, scores.data, -np.inf)
    peak = masked.max(axis=-1, keepdims=True)
    weights = np.exp(masked - peak)
    probs = (weights / weights.sum(axis=-1, keepdims=True)).astype(scores.dtype)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        inner = np.sum(g * probs, axis=-1, keepdims=True)
        return (probs * (g - inner),)

    return Tensor._from_op(probs, (scores,), _backward, "masked_softmax")


def cross_entropy_mean(logits: Tensor, targets: np.ndarray, ignore_index: int = -100) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_index."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_mean expects logits [N, V], got {logits.shape}")
    labels = np.asarray(targets, dtype=np.int64).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"targets length {labels.shape[0]} != logits rows {logits.shape[0]}")
    valid = labels != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise DataError("cross_entropy_mean: every target position equals ignore_index")
    vocab = logits.shape[1]
    safe = np.where(valid, labels, 0)
    if safe.min() < 0 or safe.max() >= vocab:
        raise DataError(f"targets must lie in [0, {vocab}) or equal ignore_index")

    peak = logits.data.max(axis=1, keepdims=True)
    shifted = logits.data - peak
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(labels.shape[0])
    nll = -log_probs[rows, safe]
    loss = np.asarray(nll[valid].sum() / count, dtype=logits.dtype)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.exp(log_probs)
        grad[rows, safe] -= 1.0
        grad *= (valid / count)[:, None]
        return ((grad * g).astype(logits.dtype),)

    return Tensor._from_op(loss, (logits,), _backward, "cross_entropy_mean")


# ----- operator overloads ----------------------------------------------------

Tensor.__add__ = add  # type: ignore[method-assign]
Tensor.__radd__ = lambda self, other: add(other, self)  # type: ignore[method-assign]
Tensor.__sub__ = sub  # type: ignore[method-assign]
Tensor.__rsub__ = lambda self, other: sub(other, self)  # type: ignore[method-assign]
Tensor.__mul__ = mul  # type: ignore[method-assign]
Tensor.__rmul__ = lambda self, other: mul(other, self)  # type: ignore[method-assign]
Tensor.__truediv__ = div  # type: ignore[method-assign]
Tensor.__rtruediv__ = lambda self, other: div(other, self)  # type: ignore[method-assign]
Tensor.__neg__ = neg  # type: ignore[method-assign]
Tensor.__matmul__ = matmul  # type: ignore[method-assign]
Tensor.reshape = lambda self, *shape: reshape(  # type: ignore[attr-defined]
    self, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape
)
Tensor.transpose = lambda self, *axes: transpose(  # type: ignore[attr-defined]
    self, axes[0] if len(axes) == 1 and not isinstance(axes[0], int) else axes
)
Tensor.sum = lambda self, axis=None, keepdims=False: (  # type: ignore[attr-defined]
    sum(self, axis, keepdims)
)
Tensor.mean = lambda self, axis=None, keepdims=False: (  # type: ignore[attr-defined]
    mean(self, axis, keepdims)
)
