"""Reverse-mode automatic differentiation on NumPy arrays."""

from . import ops
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .tensor import (
    Tensor,
    backward,
    default_dtype,
    ensure_finite,
    is_grad_enabled,
    no_grad,
    precision,
)

__all__ = [
    "Tensor",
    "backward",
    "default_dtype",
    "ensure_finite",
    "is_grad_enabled",
    "no_grad",
    "precision",
    "ops",
    "check_gradients",
    "numeric_gradient",
    "relative_error",
]
