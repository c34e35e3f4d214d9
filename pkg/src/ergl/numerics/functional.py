"""Differentiable layer primitives and losses built on :mod:`ergl.numerics.tensor`."""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DimensionError, InputError, NonFiniteError
from .tensor import Tensor, as_tensor, make_result, matmul

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# when not None, relu appends its activation pattern here (see gradcheck)
kink_log: Optional[list] = None


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    if kink_log is not None:
        kink_log.append(mask)
    # np.maximum keeps NaN visible instead of clamping it to zero
    return make_result(np.maximum(x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1 / (1 + z), z / (1 + z)).astype(x.dtype)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),))


def pointwise_activation(x, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with the row maximum subtracted first."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward)


softmax_stable = softmax


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias`` over the trailing axis of ``x``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input trailing extent {x.shape[-1]} != weight rows {weight.shape[0]} "
            f"(input {x.shape}, weight {weight.shape})"
        )
    lead = x.shape[:-1]
    out = matmul(x.reshape(-1, x.shape[-1]) if x.ndim != 2 else x, weight)
    if x.ndim != 2:
        out = out.reshape(*lead, weight.shape[1])
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise DimensionError(f"linear: bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias
    return out


def conv2d(x, kernel) -> Tensor:
    """Stride-1 cross-correlation with "same" zero padding.

    x: [b, c_in, h, w]; kernel: [c_out, c_in, k, k] with odd k.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    b, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"conv2d needs an odd square kernel, got {kernel.shape}")
    pad = kh // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    # windows: [b, c_in, h, w, kh, kw] -> columns [b*h*w, c_in*kh*kw]
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, c_in * kh * kw)
    kmat = kernel.data.reshape(c_out, -1)
    out = (cols @ kmat.T).reshape(b, h, w, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(b * h * w, c_out)
        gk = (gmat.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ kmat).reshape(b, h, w, c_in, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + h, j : j + w] += gcols[..., i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad : pad + h, pad : pad + w]
        return gx, gk

    return make_result(np.ascontiguousarray(out), (x, kernel), backward)


def avg_pool2d(x, size: int = 2) -> Tensor:
    """Non-overlapping average pooling over the last two axes; remainders are dropped."""
    x = as_tensor(x)
    *lead, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise DimensionError(f"avg_pool2d: input {x.shape} smaller than pool size {size}")
    crop = x.data[..., : ho * size, : wo * size]
    out = crop.reshape(*lead, ho, size, wo, size).mean(axis=(-3, -1))

    def backward(g):
        up = np.repeat(np.repeat(g, size, axis=-2), size, axis=-1) / (size * size)
        full = np.zeros_like(x.data)
        full[..., : ho * size, : wo * size] = up
        return (full,)

    return make_result(out, (x,), backward)


def global_avg_pool(x, axis: int = -2) -> Tensor:
    """Mean over the token axis (default: second to last)."""
    x = as_tensor(x)
    return x.mean(axis=axis)


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    axis: int = 1,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> Tensor:
    """Per-channel batch normalisation; ``axis`` is the channel axis.

    In training mode the batch statistics are used and the running
    buffers are updated in place (unbiased variance, like PyTorch).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axis = axis % x.ndim
    if training and x.shape[0] < 2:
        raise ConfigurationError(f"batch_norm in train mode needs batch size >= 2, got {x.shape[0]}")
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)
    bshape = [1] * x.ndim
    bshape[axis] = x.shape[axis]
    g_ = gamma.data.reshape(bshape)
    b_ = beta.data.reshape(bshape)

    if training:
        mu = x.data.mean(axis=reduce_axes, keepdims=True)
        var = x.data.var(axis=reduce_axes, keepdims=True)
        count = x.size // x.shape[axis]
        unbiased = var.reshape(-1) * (count / max(count - 1, 1))
        running_mean *= 1 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mu = running_mean.reshape(bshape).astype(x.dtype)
        var = running_var.reshape(bshape).astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * g_ + b_

    def backward(g):
        ggamma = (g * xhat).sum(axis=reduce_axes)
        gbeta = g.sum(axis=reduce_axes)
        if training:
            gx_hat = g * g_
            gx = inv_std * (
                gx_hat
                - gx_hat.mean(axis=reduce_axes, keepdims=True)
                - xhat * (gx_hat * xhat).mean(axis=reduce_axes, keepdims=True)
            )
        else:
            gx = g * g_ * inv_std
        return gx, ggamma.reshape(gamma.shape), gbeta.reshape(beta.shape)

    return make_result(out.astype(x.dtype), (x, gamma, beta), backward)


def dropout(x, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) in training mode."""
    if not 0 <= p < 1:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in training mode needs a seeded generator")
    keep = rng.random(x.shape) >= p
    scale = np.asarray(keep / (1.0 - p), dtype=x.dtype)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,))


def _check_finite(value: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{what} is not finite")


def loss_mse(pred, target) -> Tensor:
    """Mean of squared differences over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.mean(diff * diff))
    _check_finite(out, "mse loss")
    n = diff.size

    def backward(g):
        gd = g * 2.0 * diff / n
        return gd, -gd

    return make_result(out, (pred, target), backward)


def loss_ce(logits, labels) -> Tensor:
    """Mean cross entropy of integer ``labels`` under softmax(``logits``)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"cross entropy expects [batch, classes] logits, got {logits.shape}")
    b, s = logits.shape
    if labels.shape != (b,):
        raise DimensionError(f"cross entropy: labels shape {labels.shape} != ({b},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise InputError("cross entropy labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= s):
        raise InputError(f"cross entropy label out of range [0, {s}): {labels.tolist()}")
    _check_finite(logits.data, "cross-entropy logits")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(b)
    out = np.asarray(-logp[rows, labels].mean())
    _check_finite(out, "cross-entropy loss")

    def backward(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1
        return (g * grad / b,)

    return make_result(out, (logits,), backward)


__all__ = [
    "avg_pool2d",
    "batch_norm",
    "conv2d",
    "dropout",
    "global_avg_pool",
    "linear",
    "log_softmax",
    "loss_ce",
    "loss_mse",
    "pointwise_activation",
    "relu",
    "sigmoid",
    "softmax",
    "softmax_stable",
]
