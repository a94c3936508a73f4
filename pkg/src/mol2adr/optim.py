"""Adam optimizer and cosine learning-rate schedule."""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import ShapeMismatch, StepOutOfRange


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState, lr: float
) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place.

    A missing gradient (None) is treated as zero.

    Raises:
        ShapeMismatch: If a gradient or stored moment does not match its parameter
    """
    if len(params) != len(grads):
        raise ShapeMismatch(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} for parameter {p.name or i} {p.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * (g * g)
        m_hat = state.m[i] / (1 - state.beta1**t)
        v_hat = state.v[i] / (1 - state.beta2**t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)


class Adam:
    """Stateful wrapper around :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(beta1, beta2, eps)

    def step(self, lr: float) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class CosineSchedule:
    total_steps: int
    lr_max: float = 1e-3
    lr_min: float = 1e-5

    def __post_init__(self):
        if not (self.lr_max >= self.lr_min > 0):
            raise ValueError(f"need lr_max >= lr_min > 0, got {self.lr_max}, {self.lr_min}")


def cosine_lr(step: int, schedule: CosineSchedule) -> float:
    """Cosine decay from ``lr_max`` at step 0 to ``lr_min`` at ``total_steps``.

    Raises:
        StepOutOfRange: If ``step`` is outside ``[0, total_steps]``
    """
    if step < 0 or step > schedule.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {schedule.total_steps}]")
    if schedule.total_steps == 0:
        return schedule.lr_max
    progress = step / schedule.total_steps
    span = schedule.lr_max - schedule.lr_min
    return schedule.lr_min + 0.5 * span * (1 + math.cos(math.pi * progress))
