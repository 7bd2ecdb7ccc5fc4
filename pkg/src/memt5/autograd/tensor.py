"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Every differentiable operation in
:mod:`memt5.autograd.functional` returns a new tensor that remembers its
parents and a closure mapping the output gradient to parent gradients.
:func:`backward` traces the graph reachable from a scalar loss into a
:class:`Graph` (inputs before outputs) and walks it once in reverse.

Tensors are never mutated by operations; only ``grad`` on leaves
accumulates, and optimizers update parameter ``data`` in place between steps.

Precision defaults to float32. Gradient checks and oracles run under
``with precision("float64"):`` so that newly created tensors are 64-bit.
Both the grad mode and the default dtype are thread-local, so evaluation
threads using :func:`no_grad` do not disturb a training thread.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any

import numpy as np

from memt5.exceptions import NumericalError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_DTYPES: dict[str, type[np.floating[Any]]] = {"float32": np.float32, "float64": np.float64}


class _ThreadState(threading.local):
    def __init__(self) -> None:
        self.grad_enabled = True
        self.dtype: type[np.floating[Any]] = np.float32


_state = _ThreadState()
_debug_checks = False


def default_dtype() -> type[np.floating[Any]]:
    """Dtype used for tensors created without an explicit dtype."""
    return _state.dtype


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the default dtype ("float32" or "float64")."""
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    previous = _state.dtype
    _state.dtype = _DTYPES[name]
    try:
        yield
    finally:
        _state.dtype = previous


def grad_enabled() -> bool:
    return _state.grad_enabled


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (evaluation, decoding, probes)."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def set_debug_checks(enabled: bool) -> None:
    """Enable the NaN/Inf scan on every op output."""
    global _debug_checks
    _debug_checks = enabled


def debug_checks_enabled() -> bool:
    return _debug_checks


class Tensor:
    """Dense float array participating in the autograd graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        *,
        dtype: Any = None,
        name: str | None = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=dtype or default_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    # ----- construction helpers ----------------------------------------

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: tuple[Tensor, ...],
        backward_fn: BackwardFn,
        op: str,
    ) -> Tensor:
        if _debug_checks and not np.all(np.isfinite(data)):
            raise NumericalError(f"non-finite values in output of {op} (shape {data.shape})")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        out.requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        return out

    # ----- accessors -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{label})"


@dataclass(frozen=True, slots=True)
class Graph:
    """Nodes reachable from a root, topologically ordered (inputs first)."""

    nodes: tuple[Tensor, ...]

    @classmethod
    def trace(cls, root: Tensor) -> Graph:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(nodes=tuple(order))

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> Graph:
    """Populate ``grad`` on every ``requires_grad`` leaf reachable from ``loss``.

    Gradients accumulate additively into existing leaf grads. Returns the
    traversed graph (each node visited exactly once).
    """
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor with requires_grad=True")

    graph = Graph.trace(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        parent_grads = node._backward(grad)
        for parent, parent_grad in zip(node._parents, parent_grads, strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad
    return graph
