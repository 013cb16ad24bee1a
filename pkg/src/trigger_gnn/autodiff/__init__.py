"""Minimal reverse-mode autodiff on numpy arrays."""

from . import tensor as ops
from .checkpoint import CheckpointError
from .gradcheck import GradCheckError, grad_check
from .nn import Params, dropout, glorot_uniform, linear, sinusoidal_positions
from .optim import Adam, OptimizerState, adam_step
from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    get_tape,
    no_grad,
    set_default_dtype,
)

__all__ = [
    "Adam",
    "CheckpointError",
    "GradCheckError",
    "OptimizerState",
    "Params",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "default_dtype",
    "dropout",
    "get_default_dtype",
    "get_tape",
    "glorot_uniform",
    "grad_check",
    "linear",
    "no_grad",
    "ops",
    "set_default_dtype",
    "sinusoidal_positions",
]
