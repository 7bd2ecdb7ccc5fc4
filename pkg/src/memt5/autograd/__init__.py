"""Minimal numpy-backed reverse-mode autograd."""

from memt5.autograd import functional
from memt5.autograd.tensor import (
    Graph,
    Tensor,
    backward,
    debug_checks_enabled,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
    set_debug_checks,
)

__all__ = [
    "Graph",
    "Tensor",
    "backward",
    "debug_checks_enabled",
    "default_dtype",
    "functional",
    "grad_enabled",
    "no_grad",
    "precision",
    "set_debug_checks",
]
