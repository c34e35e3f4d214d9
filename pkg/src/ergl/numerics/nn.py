"""Minimal module system: parameter containers, buffers and train/eval switching."""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from . import functional as F
from .tensor import Tensor, default_dtype


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def conv_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    c_out, c_in, kh, kw = shape
    bound = math.sqrt(6.0 / (c_in * kh * kw))
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


def parameter(data, name: str = "") -> Tensor:
    return Tensor(np.asarray(data, dtype=default_dtype()), requires_grad=True, name=name)


class Module:
    """Container of parameters, buffers and child modules.

    Attributes holding a ``Tensor`` with ``requires_grad`` are parameters;
    numpy arrays registered through :meth:`register_buffer` are buffers
    (e.g. batch-norm running statistics). Children are discovered from
    attributes that are modules or lists of modules.
    """

    def __init__(self):
        self.training = True
        self._buffers: List[str] = []

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        setattr(self, name, value)
        self._buffers.append(name)

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for key, value in vars(self).items():
            if isinstance(value, Module):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
        for key, child in self.children():
            yield from child.named_parameters(prefix + key + ".")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for key in self._buffers:
            yield prefix + key, getattr(self, key)
        for key, child in self.children():
            yield from child.named_buffers(prefix + key + ".")

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: buf for name, buf in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(own) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: stored shape {value.shape} != parameter shape {p.shape}")
            p.data = value.astype(p.dtype).copy()
        for name, buf in buffers.items():
            buf[...] = state[name]

    def astype(self, dtype) -> "Module":
        """Cast every parameter and buffer in place (used for 64-bit gradient checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        self._cast_buffers(dtype)
        return self

    def _cast_buffers(self, dtype) -> None:
        for key in self._buffers:
            setattr(self, key, getattr(self, key).astype(dtype))
        for _, child in self.children():
            child._cast_buffers(dtype)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = parameter(xavier_uniform(rng, (d_in, d_out), d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel_size: int = 3):
        super().__init__()
        self.weight = parameter(conv_uniform(rng, (c_out, c_in, kernel_size, kernel_size)))

    def forward(self, x):
        return F.conv2d(x, self.weight)


class BatchNorm(Module):
    """Batch normalisation over channel ``axis`` (1 for images, -1 for feature-last tensors)."""

    def __init__(self, channels: int, axis: int = 1):
        super().__init__()
        self.axis = axis
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=default_dtype()))
        self.register_buffer("running_var", np.ones(channels, dtype=default_dtype()))

    def forward(self, x):
        return F.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, axis=self.axis
        )


class Dropout(Module):
    def __init__(self, p: float, rng: Optional[np.random.Generator] = None):
        super().__init__()
        if not 0 <= p < 1:
            raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)
