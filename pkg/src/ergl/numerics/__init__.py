"""Numeric substrate: tensors, gradient tape, layers, losses and AdamW."""

from .functional import (
    avg_pool2d,
    batch_norm,
    conv2d,
    dropout,
    global_avg_pool,
    linear,
    log_softmax,
    loss_ce,
    loss_mse,
    pointwise_activation,
    relu,
    sigmoid,
    softmax,
    softmax_stable,
)
from .gradcheck import finite_diff_check, finite_diff_report, param_grad_check, relative_error
from .nn import BatchNorm, Conv2d, Dropout, Linear, Module
from .optim import AdamW, AdamWState, adamw_step
from .tensor import (
    GradTape,
    Tensor,
    concat,
    default_dtype,
    exp,
    log,
    matmul,
    no_grad,
    set_default_dtype,
    shadow64,
    stack,
)

__all__ = [
    "AdamW",
    "AdamWState",
    "BatchNorm",
    "Conv2d",
    "Dropout",
    "GradTape",
    "Linear",
    "Module",
    "Tensor",
    "adamw_step",
    "avg_pool2d",
    "batch_norm",
    "concat",
    "conv2d",
    "default_dtype",
    "dropout",
    "exp",
    "finite_diff_check",
    "finite_diff_report",
    "global_avg_pool",
    "linear",
    "log",
    "log_softmax",
    "loss_ce",
    "loss_mse",
    "matmul",
    "no_grad",
    "param_grad_check",
    "pointwise_activation",
    "relative_error",
    "relu",
    "set_default_dtype",
    "shadow64",
    "sigmoid",
    "softmax",
    "softmax_stable",
    "stack",
]
