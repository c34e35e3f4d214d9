"""Central finite-difference verification of tape gradients in 64-bit shadow mode.

ReLU is not differentiable at zero, and a finite step can carry a
pre-activation across that kink, which makes the difference quotient
meaningless for that entry. The checker records every ReLU activation
pattern during evaluation; when a perturbed evaluation flips any unit
relative to the unperturbed one, the step for that entry is divided by 10
until the pattern is stable (at most ``MAX_REFINEMENTS`` times).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import functional
from .tensor import GradTape, Tensor, no_grad, shadow64

# gradients smaller than this are compared in absolute terms
ERROR_FLOOR = 1e-6
MAX_REFINEMENTS = 4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, ERROR_FLOOR)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ERROR_FLOOR)
    return np.abs(analytic - numeric) / scale


@contextlib.contextmanager
def _track_kinks():
    log: List[np.ndarray] = []
    previous = functional.kink_log
    functional.kink_log = log
    try:
        yield log
    finally:
        functional.kink_log = previous


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _scalar(y: Tensor) -> float:
    if y.size != 1:
        raise ValueError(f"gradient check needs a scalar function, got shape {y.shape}")
    return float(y.data.reshape(()))


@dataclass
class CheckReport:
    max_error: float
    errors: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray
    refined: int  # entries whose step had to shrink to avoid a kink


class _Probe:
    """Evaluates a scalar function with one coordinate of ``buf`` perturbed."""

    def __init__(self, evaluate: Callable[[], float], buf: np.ndarray, avoid_kinks: bool):
        self.evaluate = evaluate
        self.buf = buf
        self.avoid_kinks = avoid_kinks
        self.base: List[np.ndarray] = []
        if avoid_kinks:
            with _track_kinks() as log:
                evaluate()
            self.base = list(log)

    def _at(self, i, value) -> Tuple[float, List[np.ndarray]]:
        orig = self.buf[i]
        self.buf[i] = value
        try:
            if self.avoid_kinks:
                with _track_kinks() as log:
                    y = self.evaluate()
                return y, list(log)
            return self.evaluate(), []
        finally:
            self.buf[i] = orig

    def derivative(self, i, step: float) -> Tuple[float, bool]:
        orig = self.buf[i]
        h = step
        for attempt in range(MAX_REFINEMENTS + 1):
            up, pat_up = self._at(i, orig + h)
            down, pat_down = self._at(i, orig - h)
            if not self.avoid_kinks or (_same_pattern(pat_up, self.base) and _same_pattern(pat_down, self.base)):
                return (up - down) / (2 * h), attempt > 0
            h /= 10.0
        return (up - down) / (2 * h), True


def tape_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    leaf = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with shadow64(), GradTape() as tape:
        y = f(leaf)
    tape.backward(y)
    return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)


def numeric_gradient(
    f: Callable[[Tensor], Tensor], x: np.ndarray, step: float = 1e-3, avoid_kinks: bool = True
) -> Tuple[np.ndarray, int]:
    """Central-difference gradient of ``f`` at ``x`` and the number of refined entries."""
    buf = np.array(x, dtype=np.float64)
    grad = np.zeros_like(buf)
    refined = 0
    with shadow64(), no_grad():
        probe = _Probe(lambda: _scalar(f(Tensor(buf.copy()))), buf, avoid_kinks)
        for idx in np.ndindex(*buf.shape):
            grad[idx], was_refined = probe.derivative(idx, step)
            refined += was_refined
    return grad, refined


def finite_diff_report(
    f: Callable[[Tensor], Tensor], x, step: float = 1e-3, avoid_kinks: bool = True
) -> CheckReport:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    analytic = tape_gradient(f, data)
    numeric, refined = numeric_gradient(f, data, step, avoid_kinks)
    errors = relative_error(analytic, numeric)
    return CheckReport(float(errors.max()) if errors.size else 0.0, errors, analytic, numeric, refined)


def finite_diff_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-3, avoid_kinks: bool = True) -> float:
    """Worst elementwise relative error between tape and central-difference gradients.

    ``f`` maps a tensor to a scalar tensor and must be deterministic
    (dropout off, batch-norm statistics fixed or recomputed identically).
    """
    return finite_diff_report(f, x, step, avoid_kinks).max_error


def param_grad_check(
    loss_fn: Callable[[], Tensor],
    named_params: Iterable[Tuple[str, Tensor]],
    step: float = 1e-3,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    avoid_kinks: bool = True,
) -> Dict[str, float]:
    """Check gradients of ``loss_fn()`` with respect to model parameters.

    Parameters are perturbed in place and restored afterwards; they should
    already be float64 (see ``Module.astype``). With ``max_entries`` only a
    random subset of each parameter's entries is probed.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.data = np.ascontiguousarray(p.data)
        p.grad = None
    with shadow64(), GradTape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    gen = rng if rng is not None else np.random.default_rng(0)
    errors = {}
    with shadow64(), no_grad():
        for name, p in named_params:
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            picks = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                picks = np.sort(gen.choice(flat.size, size=max_entries, replace=False))
            probe = _Probe(lambda: _scalar(loss_fn()), flat, avoid_kinks)
            numeric = np.array([probe.derivative(int(i), step)[0] for i in picks])
            errors[name] = float(relative_error(analytic.reshape(-1)[picks], numeric).max())
    return errors


def worst(errors: Dict[str, float]) -> Tuple[str, float]:
    name = max(errors, key=errors.get)
    return name, errors[name]
