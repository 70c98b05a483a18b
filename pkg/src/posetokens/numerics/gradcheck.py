"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ops import Array, NumericsError, Param

LossAndGrads = Callable[[], tuple[float, dict[str, Array]]]


@dataclass
class GradCheckResult:
    per_param: dict[str, float]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def worst(self) -> str:
        if not self.per_param:
            return "<no params>"
        name = max(self.per_param, key=self.per_param.get)
        return f"{name}: {self.per_param[name]:.3e}"


def rel_error(analytic: Array, numeric: Array) -> float:
    """max |a - n| / max(|a|, |n|, 1); relative above unit scale, absolute below."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check(loss_fn: LossAndGrads, params: list[Param], h: float = 1e-5,
               tolerance: float = 1e-5) -> GradCheckResult:
    """Compare loss_fn's analytic gradients against central finite differences.

    ``loss_fn`` must read the current Param values and deterministically return
    (scalar loss, {param name: gradient array}); parameter values are perturbed
    in place, one element at a time.
    """
    loss0, grads = loss_fn()
    loss1, _ = loss_fn()
    if loss0 != loss1:
        raise NumericsError("grad_check: loss_fn is not deterministic")

    per_param: dict[str, float] = {}
    for p in params:
        if p.name not in grads:
            raise NumericsError(f"grad_check: no analytic gradient for {p.name}")
        analytic = grads[p.name]
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_fn()
            flat[i] = orig - h
            lm, _ = loss_fn()
            flat[i] = orig
            nflat[i] = (lp - lm) / (2.0 * h)
        per_param[p.name] = rel_error(analytic, numeric)
    return GradCheckResult(per_param, tolerance)
