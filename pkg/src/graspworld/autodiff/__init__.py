"""Minimal reverse-mode autodiff engine backing the SRL and RL stacks."""

from . import checkpoint, ops
from .optim import Adam, AdamState, adam_step
from .tensor import DTYPE, ShapeError, Tape, Tensor, as_tensor

__all__ = [
    "Adam",
    "AdamState",
    "DTYPE",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "checkpoint",
    "ops",
]
