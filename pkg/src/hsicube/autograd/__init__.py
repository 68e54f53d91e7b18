"""Minimal reverse-mode differentiation engine and network building blocks."""

from . import checkpoint, layers, ops, optim
from .tensor import Parameter, Tensor

__all__ = ["Tensor", "Parameter", "ops", "layers", "optim", "checkpoint"]
