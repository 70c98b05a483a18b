"""AdamW with decoupled weight decay and a warmup + half-cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ops import Param


@dataclass
class Schedule:
    base_lr: float
    warmup_steps: int
    total_steps: int


def cosine_lr(step: int, schedule: Schedule) -> float:
    """Linear ramp 0 -> base_lr over warmup, then half-cosine decay to 0."""
    if step < 0:
        raise ValueError("cosine_lr: step must be >= 0")
    if schedule.warmup_steps > 0 and step < schedule.warmup_steps:
        return schedule.base_lr * step / schedule.warmup_steps
    span = max(schedule.total_steps - schedule.warmup_steps, 1)
    progress = min((step - schedule.warmup_steps) / span, 1.0)
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamW:
    """Decoupled-weight-decay Adam over a fixed list of Params.

    Moments are kept per parameter name; ``step_count`` strictly increases.
    When a Schedule is attached, each step uses cosine_lr(step_count, schedule),
    so the first step runs at the warmup starting rate.
    """

    params: list[Param]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    schedule: Schedule | None = None
    step_count: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("AdamW: duplicate parameter names")
        for p in self.params:
            self.moments[p.name] = (np.zeros_like(p.value), np.zeros_like(p.value))

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def current_lr(self) -> float:
        if self.schedule is not None:
            return cosine_lr(self.step_count, self.schedule)
        return self.lr

    def step(self) -> float:
        """Apply one update from the accumulated gradients; returns the lr used."""
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in self.params:
            m, v = self.moments[p.name]
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and p.decay:
                update = update + self.weight_decay * p.value
            p.value -= lr * update
        return lr
