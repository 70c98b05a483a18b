"""Dense forward layers with exact manual backward passes.

All functions operate on float64 numpy arrays and support arbitrary leading
batch axes; the documented axis is always the last one (or last two for the
mixer block in mixer.py). Backward functions implement the chain rule exactly,
so analytic gradients match central finite differences to near machine
precision (see gradcheck.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

LAYERNORM_EPS = 1e-6

# tanh-form GELU constants, frozen so outputs are reproducible bit-for-bit
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class NumericsError(ValueError):
    """Raised on shape mismatches, non-finite values, or degenerate inputs."""


def as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def assert_finite(name: str, *arrays: Array) -> None:
    """Raise NumericsError if any array contains NaN or Inf."""
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericsError(f"non-finite values in {name}")


@dataclass
class Param:
    """A named parameter with a gradient accumulator of the same shape.

    ``decay`` marks whether decoupled weight decay applies; biases, norm
    scales/shifts, and embeddings conventionally opt out.
    """

    name: str
    value: Array
    decay: bool = True
    grad: Array = field(init=False)

    def __post_init__(self):
        self.value = as_f64(self.value)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def linear(x: Array, w: Array, b: Array) -> Array:
    """y = x @ w + b along the last axis. x (..., in), w (in, out), b (out)."""
    if x.shape[-1] != w.shape[0]:
        raise NumericsError(
            f"linear: input width {x.shape[-1]} != weight rows {w.shape[0]}"
        )
    return x @ w + b


def linear_bwd(gy: Array, x: Array, w: Array) -> tuple[Array, Array, Array]:
    """Gradients (gx, gw, gb) for y = x @ w + b."""
    gx = gy @ w.T
    # collapse all leading axes into one batch axis for the weight gradient
    x2 = x.reshape(-1, x.shape[-1])
    gy2 = gy.reshape(-1, gy.shape[-1])
    gw = x2.T @ gy2
    gb = gy2.sum(axis=0)
    return gx, gw, gb


@dataclass
class LayerNormCache:
    xhat: Array
    inv_std: Array
    scale: Array


def layernorm(x: Array, scale: Array, shift: Array,
              eps: float = LAYERNORM_EPS) -> tuple[Array, LayerNormCache]:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return xhat * scale + shift, LayerNormCache(xhat, inv_std, scale)


def layernorm_bwd(gy: Array, cache: LayerNormCache) -> tuple[Array, Array, Array]:
    """Gradients (gx, gscale, gshift) for layernorm."""
    xhat, inv_std, scale = cache.xhat, cache.inv_std, cache.scale
    n = xhat.shape[-1]
    gxhat = gy * scale
    # gx = inv_std * (gxhat - mean(gxhat) - xhat * mean(gxhat * xhat))
    gx = inv_std * (
        gxhat
        - gxhat.mean(axis=-1, keepdims=True)
        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
    )
    axes = tuple(range(gy.ndim - 1))
    gscale = (gy * xhat).sum(axis=axes)
    gshift = gy.sum(axis=axes)
    return gx, gscale, gshift


def gelu_fwd(x: Array) -> tuple[Array, Array]:
    """Tanh-approximation GELU; returns (y, dy/dx) so the backward pass is a
    single multiply instead of a tanh recomputation."""
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + _GELU_A * x2))
    half_x = 0.5 * x
    y = half_x + half_x * t
    deriv = 0.5 + 0.5 * t
    deriv += half_x * (1.0 - t * t) * (_GELU_C * (1.0 + 3.0 * _GELU_A * x2))
    return y, deriv


def gelu(x: Array) -> Array:
    """Tanh-approximation GELU: 0.5*x*(1 + tanh(c*(x + a*x^3)))."""
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + _GELU_A * x2))
    return 0.5 * x * (1.0 + t)


def gelu_bwd(gy: Array, x: Array, deriv: Array | None = None) -> Array:
    """gy times the GELU derivative (precomputed by gelu_fwd when given)."""
    if deriv is not None:
        return gy * deriv
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + _GELU_A * x2))
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def softmax(x: Array) -> Array:
    """Row softmax over the last axis with max subtraction for stability."""
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(gy: Array, p: Array) -> Array:
    """gx for p = softmax(x): p * (gy - sum(gy * p))."""
    return p * (gy - (gy * p).sum(axis=-1, keepdims=True))
