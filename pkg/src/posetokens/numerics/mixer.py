"""Token/channel-mixing residual block over a (tokens, channels) matrix.

Pre-norm residual form:

    u = x + token_mlp(norm1(x))    mixing along the token axis
    y = u + channel_mlp(norm2(u))  mixing along the channel axis

Both MLPs are linear -> GELU -> linear. When ``mix_tokens`` is False the
token-mixing sub-block (and norm1) is omitted entirely, leaving a per-token
residual MLP; this is the "no cross-token interaction" variant used by the
per-joint ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import (
    Array,
    NumericsError,
    Param,
    gelu_bwd,
    gelu_fwd,
    layernorm,
    layernorm_bwd,
    linear,
    linear_bwd,
)


@dataclass
class MixerBlockParams:
    tokens: int
    channels: int
    mix_tokens: bool
    norm1_scale: Param | None
    norm1_shift: Param | None
    token_w1: Param | None
    token_b1: Param | None
    token_w2: Param | None
    token_b2: Param | None
    norm2_scale: Param
    norm2_shift: Param
    chan_w1: Param
    chan_b1: Param
    chan_w2: Param
    chan_b2: Param

    def params(self) -> list[Param]:
        out = [p for p in (self.norm1_scale, self.norm1_shift, self.token_w1,
                           self.token_b1, self.token_w2, self.token_b2)
               if p is not None]
        out += [self.norm2_scale, self.norm2_shift,
                self.chan_w1, self.chan_b1, self.chan_w2, self.chan_b2]
        return out


def init_mixer_block(rng: np.random.Generator, name: str, tokens: int,
                     channels: int, token_hidden_ratio: float = 0.5,
                     channel_hidden_ratio: float = 4.0,
                     mix_tokens: bool = True,
                     init_std: float = 0.02) -> MixerBlockParams:
    """Initialize a mixer block with normal(0, init_std) weights, zero biases.

    Second MLP layers start at zero so each residual branch begins as the
    identity; this keeps the early residual stream input-dominated and speeds
    up optimization noticeably at this scale.
    """
    th = max(1, round(tokens * token_hidden_ratio))
    ch = max(1, round(channels * channel_hidden_ratio))

    def w(suffix, shape):
        return Param(f"{name}.{suffix}", rng.normal(0.0, init_std, size=shape))

    def zeros(suffix, shape):
        return Param(f"{name}.{suffix}", np.zeros(shape), decay=False)

    def ones(suffix, shape):
        return Param(f"{name}.{suffix}", np.ones(shape), decay=False)

    def zero_w(suffix, shape):
        return Param(f"{name}.{suffix}", np.zeros(shape))

    if mix_tokens:
        norm1_scale = ones("norm1_scale", channels)
        norm1_shift = zeros("norm1_shift", channels)
        token_w1 = w("token_w1", (tokens, th))
        token_b1 = zeros("token_b1", th)
        token_w2 = zero_w("token_w2", (th, tokens))
        token_b2 = zeros("token_b2", tokens)
    else:
        norm1_scale = norm1_shift = None
        token_w1 = token_b1 = token_w2 = token_b2 = None

    return MixerBlockParams(
        tokens=tokens,
        channels=channels,
        mix_tokens=mix_tokens,
        norm1_scale=norm1_scale,
        norm1_shift=norm1_shift,
        token_w1=token_w1,
        token_b1=token_b1,
        token_w2=token_w2,
        token_b2=token_b2,
        norm2_scale=ones("norm2_scale", channels),
        norm2_shift=zeros("norm2_shift", channels),
        chan_w1=w("chan_w1", (channels, ch)),
        chan_b1=zeros("chan_b1", ch),
        chan_w2=zero_w("chan_w2", (ch, channels)),
        chan_b2=zeros("chan_b2", channels),
    )


@dataclass
class MixerCache:
    x: Array
    n1_cache: object | None
    n1t: Array | None
    th_pre: Array | None
    th_deriv: Array | None
    th: Array | None
    u: Array
    n2_cache: object
    n2: Array
    ch_pre: Array
    ch_deriv: Array
    ch: Array


def mixer_block(x: Array, p: MixerBlockParams) -> tuple[Array, MixerCache]:
    """Forward pass; x has shape (..., tokens, channels)."""
    if x.shape[-2] != p.tokens or x.shape[-1] != p.channels:
        raise NumericsError(
            f"mixer_block: input {x.shape[-2:]} does not match "
            f"configured axes ({p.tokens}, {p.channels})"
        )
    if p.mix_tokens:
        n1, n1_cache = layernorm(x, p.norm1_scale.value, p.norm1_shift.value)
        n1t = np.swapaxes(n1, -1, -2)  # (..., channels, tokens)
        th_pre = linear(n1t, p.token_w1.value, p.token_b1.value)
        th, th_deriv = gelu_fwd(th_pre)
        to = linear(th, p.token_w2.value, p.token_b2.value)
        u = x + np.swapaxes(to, -1, -2)
    else:
        n1_cache = n1t = th_pre = th_deriv = th = None
        u = x
    n2, n2_cache = layernorm(u, p.norm2_scale.value, p.norm2_shift.value)
    ch_pre = linear(n2, p.chan_w1.value, p.chan_b1.value)
    ch, ch_deriv = gelu_fwd(ch_pre)
    y = u + linear(ch, p.chan_w2.value, p.chan_b2.value)
    return y, MixerCache(x, n1_cache, n1t, th_pre, th_deriv, th, u, n2_cache,
                         n2, ch_pre, ch_deriv, ch)


def mixer_block_bwd(gy: Array, p: MixerBlockParams, c: MixerCache) -> Array:
    """Backward pass; accumulates parameter gradients and returns gx."""
    # channel-mixing branch
    gch, gw2, gb2 = linear_bwd(gy, c.ch, p.chan_w2.value)
    p.chan_w2.grad += gw2
    p.chan_b2.grad += gb2
    gch_pre = gelu_bwd(gch, c.ch_pre, c.ch_deriv)
    gn2, gw1, gb1 = linear_bwd(gch_pre, c.n2, p.chan_w1.value)
    p.chan_w1.grad += gw1
    p.chan_b1.grad += gb1
    gu_norm, gscale2, gshift2 = layernorm_bwd(gn2, c.n2_cache)
    p.norm2_scale.grad += gscale2
    p.norm2_shift.grad += gshift2
    gu = gy + gu_norm  # residual

    if not p.mix_tokens:
        return gu

    # token-mixing branch: gu splits into the residual and the MLP path
    gto = np.swapaxes(gu, -1, -2)
    gth, gtw2, gtb2 = linear_bwd(gto, c.th, p.token_w2.value)
    p.token_w2.grad += gtw2
    p.token_b2.grad += gtb2
    gth_pre = gelu_bwd(gth, c.th_pre, c.th_deriv)
    gn1t, gtw1, gtb1 = linear_bwd(gth_pre, c.n1t, p.token_w1.value)
    p.token_w1.grad += gtw1
    p.token_b1.grad += gtb1
    gn1 = np.swapaxes(gn1t, -1, -2)
    gx_norm, gscale1, gshift1 = layernorm_bwd(gn1, c.n1_cache)
    p.norm1_scale.grad += gscale1
    p.norm1_shift.grad += gshift1
    return gu + gx_norm
