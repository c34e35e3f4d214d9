"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor


@dataclass
class AdamWState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor], **hyper) -> "AdamWState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **hyper,
        )


def adamw_step(params: Sequence[Tensor], state: AdamWState, grads=None) -> None:
    """Apply one AdamW update in place.

    Weight decay is applied as ``p -= lr * wd * p`` before the bias-corrected
    Adam step. ``grads`` defaults to each parameter's ``.grad``.
    """
    if grads is None:
        grads = [p.grad for p in params]
    for i, g in enumerate(grads):
        if g is None:
            name = params[i].name or f"#{i}"
            raise UsageError(f"adamw_step: parameter {name} has no gradient")
    if len(state.m) != len(params):
        raise UsageError(f"optimizer state holds {len(state.m)} slots for {len(params)} parameters")
    state.t += 1
    b1, b2, lr = state.beta1, state.beta2, state.lr
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.weight_decay:
            p.data = p.data - lr * state.weight_decay * p.data
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)


class AdamW:
    """Thin stateful wrapper pairing a parameter list with its :class:`AdamWState`."""

    def __init__(self, params: Sequence[Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.state = AdamWState.zeros_like(
            self.params, lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay
        )

    def step(self) -> None:
        adamw_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
