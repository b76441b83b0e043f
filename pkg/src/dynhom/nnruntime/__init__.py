"""Minimal differentiable tensor runtime.

Tensors are 4-D ``(batch, channels, height, width)`` arrays with reverse-mode
autodiff over exactly the operators the estimation networks need.  Hot conv
kernels come from ``dynhom.kernels`` (numba by default, numpy fallback).
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .ops import (
    BatchNormState,
    add,
    avg_pool_global,
    batch_norm,
    concat_channels,
    conv2d,
    dropout,
    max_pool2,
    relu,
    sigmoid,
    upsample2x,
)
from .optim import LearningSchedule, adam_step, xavier_init, zeros_param
from .tensor import Parameter, Tensor

__all__ = [
    "Tensor",
    "Parameter",
    "conv2d",
    "batch_norm",
    "BatchNormState",
    "relu",
    "sigmoid",
    "max_pool2",
    "avg_pool_global",
    "dropout",
    "upsample2x",
    "concat_channels",
    "add",
    "xavier_init",
    "zeros_param",
    "adam_step",
    "LearningSchedule",
    "save_checkpoint",
    "load_checkpoint",
]
