"""Minimal dense numerical core: layers, manual backward passes, losses, AdamW."""

from .gradcheck import GradCheckResult, grad_check, rel_error
from .losses import cross_entropy, smooth_l1
from .mixer import MixerBlockParams, init_mixer_block, mixer_block, mixer_block_bwd
from .ops import (
    LAYERNORM_EPS,
    Array,
    NumericsError,
    Param,
    as_f64,
    assert_finite,
    gelu,
    gelu_bwd,
    gelu_fwd,
    layernorm,
    layernorm_bwd,
    linear,
    linear_bwd,
    softmax,
    softmax_bwd,
)
from .optim import AdamW, Schedule, cosine_lr

__all__ = [
    "AdamW",
    "Array",
    "GradCheckResult",
    "LAYERNORM_EPS",
    "MixerBlockParams",
    "NumericsError",
    "Param",
    "Schedule",
    "as_f64",
    "assert_finite",
    "cosine_lr",
    "cross_entropy",
    "gelu",
    "gelu_bwd",
    "gelu_fwd",
    "grad_check",
    "init_mixer_block",
    "layernorm",
    "layernorm_bwd",
    "linear",
    "linear_bwd",
    "mixer_block",
    "mixer_block_bwd",
    "rel_error",
    "smooth_l1",
    "softmax",
    "softmax_bwd",
]
