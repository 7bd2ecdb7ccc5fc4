"""Adafactor and AdamW over named numpy parameters.

Both optimizers keep per-parameter slot arrays keyed by the parameter's
dotted name, so updates never depend on registration order and the slots
round-trip through checkpoints as ``"<param>:<slot>"`` records.

Adafactor here is the fixed-learning-rate form used for T5 pretraining: no
first moment, no relative step, no parameter scaling. Matrices (any tensor
with two or more dims) keep row and column running means of the squared
gradient; vectors keep the full running mean. The decay at step ``t`` is
``1 - t ** -0.8`` and each update is divided by ``max(1, rms(update) / 1.0)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterable, Mapping

import numpy as np

from memt5.autograd import Tensor
from memt5.config import OptimizerKind
from memt5.exceptions import CheckpointMismatchError, NumericalError

SLOT_SEPARATOR = ":"
SLOT_DTYPE = np.float32


class Optimizer(ABC):
    """Common bookkeeping: named params, slot storage, finite-gradient guard."""

    kind: OptimizerKind

    def __init__(
        self, params: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]], weight_decay: float = 0.0
    ) -> None:
        self.params: dict[str, Tensor] = dict(
            params.items() if isinstance(params, Mapping) else params
        )
        self.weight_decay = weight_decay
        self.step_count = 0
        self.slots: dict[str, dict[str, np.ndarray]] = {
            name: self._init_slots(p.data) for name, p in self.params.items()
        }

    @abstractmethod
    def _init_slots(self, value: np.ndarray) -> dict[str, np.ndarray]: ...

    @abstractmethod
    def _update(self, name: str, grad: np.ndarray, lr: float) -> np.ndarray:
        """Return the step to subtract from the parameter (before weight decay)."""

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def check_gradients(self) -> None:
        """Raises NumericalError naming the first parameter with a NaN/Inf gradient."""
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericalError(f"non-finite gradient for {name!r}")

    def step(self, lr: float) -> None:
        """Apply one update; nothing changes if any gradient is non-finite."""
        self.check_gradients()
        self.step_count += 1
        for name in sorted(self.params):
            p = self.params[name]
            if p.grad is None:
                continue
            delta = self._update(name, p.grad.astype(np.float64), lr)
            if self.weight_decay:
                delta = delta + lr * self.weight_decay * p.data
            p.data = (p.data - delta).astype(p.dtype)

    # ----- slot serialization ------------------------------------------

    def slot_arrays(self) -> dict[str, np.ndarray]:
        return {
            f"{name}{SLOT_SEPARATOR}{slot}": array
            for name, slots in self.slots.items()
            for slot, array in slots.items()
        }

    def load_slot_arrays(self, arrays: Mapping[str, np.ndarray], step_count: int) -> None:
        expected = self.slot_arrays()
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))[:5]
            unexpected = sorted(set(arrays) - set(expected))[:5]
            raise CheckpointMismatchError(
                f"optimizer slots differ: missing={missing} unexpected={unexpected}"
            )
        for key, array in arrays.items():
            if array.shape != expected[key].shape:
                raise CheckpointMismatchError(
                    f"slot {key!r}: checkpoint shape {array.shape} != {expected[key].shape}"
                )
            name, slot = key.rsplit(SLOT_SEPARATOR, 1)
            self.slots[name][slot] = np.array(array, dtype=SLOT_DTYPE)
        self.step_count = step_count


class Adafactor(Optimizer):
    kind = OptimizerKind.ADAFACTOR

    def __init__(
        self,
        params: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
        weight_decay: float = 0.0,
        eps: float = 1e-30,
        clip_threshold: float = 1.0,
        decay_rate: float = -0.8,
    ) -> None:
        self.eps = eps
        self.clip_threshold = clip_threshold
        self.decay_rate = decay_rate
        super().__init__(params, weight_decay)

    def _init_slots(self, value: np.ndarray) -> dict[str, np.ndarray]:
        if value.ndim >= 2:
            return {
                "row": np.zeros(value.shape[:-1], dtype=SLOT_DTYPE),
                "col": np.zeros(value.shape[:-2] + value.shape[-1:], dtype=SLOT_DTYPE),
            }
        return {"v": np.zeros(value.shape, dtype=SLOT_DTYPE)}

    def _update(self, name: str, grad: np.ndarray, lr: float) -> np.ndarray:
        slots = self.slots[name]
        beta2 = 1.0 - self.step_count**self.decay_rate
        squared = grad * grad + self.eps
        if grad.ndim >= 2:
            row = beta2 * slots["row"] + (1.0 - beta2) * squared.mean(axis=-1)
            col = beta2 * slots["col"] + (1.0 - beta2) * squared.mean(axis=-2)
            slots["row"], slots["col"] = row.astype(SLOT_DTYPE), col.astype(SLOT_DTYPE)
            v_hat = factored_second_moment(row, col)
        else:
            v_hat = beta2 * slots["v"] + (1.0 - beta2) * squared
            slots["v"] = v_hat.astype(SLOT_DTYPE)
        update = grad / np.sqrt(v_hat)
        rms = float(np.sqrt(np.mean(update * update))) if update.size else 0.0
        update = update / max(1.0, rms / self.clip_threshold)
        return lr * update


def factored_second_moment(row: np.ndarray, col: np.ndarray) -> np.ndarray:
    """``row col^T / mean(row)`` over the last two axes."""
    row_factor = row / row.mean(axis=-1, keepdims=True)
    return row_factor[..., :, None] * col[..., None, :]


class AdamW(Optimizer):
    kind = OptimizerKind.ADAMW

    def __init__(
        self,
        params: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        super().__init__(params, weight_decay)

    def _init_slots(self, value: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "m": np.zeros(value.shape, dtype=SLOT_DTYPE),
            "v": np.zeros(value.shape, dtype=SLOT_DTYPE),
        }

    def _update(self, name: str, grad: np.ndarray, lr: float) -> np.ndarray:
        slots = self.slots[name]
        m = self.beta1 * slots["m"] + (1.0 - self.beta1) * grad
        v = self.beta2 * slots["v"] + (1.0 - self.beta2) * grad * grad
        slots["m"], slots["v"] = m.astype(SLOT_DTYPE), v.astype(SLOT_DTYPE)
        m_hat = m / (1.0 - self.beta1**self.step_count)
        v_hat = v / (1.0 - self.beta2**self.step_count)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


def build_optimizer(
    kind: OptimizerKind,
    params: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]],
    weight_decay: float = 0.0,
) -> Optimizer:
    if kind is OptimizerKind.ADAFACTOR:
        return Adafactor(params, weight_decay=weight_decay)
    return AdamW(params, weight_decay=weight_decay)
