"""Shared observation featurizer: per-joint embedding + mixing blocks.

Every Stage-II head (token classification, coordinate regression, discrete
bins) runs observations through this same structure, so representation
comparisons differ only in the output head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import (
    Array,
    MixerBlockParams,
    NumericsError,
    Param,
    as_f64,
    init_mixer_block,
    linear,
    linear_bwd,
    mixer_block,
    mixer_block_bwd,
)


@dataclass
class FeaturizerParams:
    joints: int
    dims: int
    context_dim: int
    hidden: int
    in_w: Param
    in_b: Param
    blocks: list[MixerBlockParams]

    def params(self) -> list[Param]:
        out = [self.in_w, self.in_b]
        for blk in self.blocks:
            out += blk.params()
        return out


def make_featurizer(rng: np.random.Generator, prefix: str, joints: int,
                    dims: int, context_dim: int, hidden: int, blocks: int,
                    token_hidden_ratio: float, channel_hidden_ratio: float,
                    init_std: float) -> FeaturizerParams:
    in_width = dims + context_dim + 1
    mixers = [
        init_mixer_block(rng, f"{prefix}.blocks.{i}", tokens=joints,
                         channels=hidden, token_hidden_ratio=token_hidden_ratio,
                         channel_hidden_ratio=channel_hidden_ratio,
                         init_std=init_std)
        for i in range(blocks)
    ]
    return FeaturizerParams(
        joints=joints, dims=dims, context_dim=context_dim, hidden=hidden,
        in_w=Param(f"{prefix}.in_w",
                   rng.normal(0.0, init_std, size=(in_width, hidden))),
        in_b=Param(f"{prefix}.in_b", np.zeros(hidden), decay=False),
        blocks=mixers,
    )


@dataclass
class FeaturizerCache:
    x0: Array
    block_caches: list


def featurizer_forward(f: FeaturizerParams, values: Array, vis: Array,
                       context: Array | None = None,
                       ) -> tuple[Array, FeaturizerCache]:
    """(..., K, hidden) features from observation values and visibility."""
    values = as_f64(values)
    if values.shape[-2:] != (f.joints, f.dims):
        raise NumericsError(
            f"featurizer: observation shape {values.shape[-2:]} != "
            f"({f.joints}, {f.dims})"
        )
    vis = np.broadcast_to(np.asarray(vis, dtype=bool), values.shape[:-1])
    flag = (~vis).astype(np.float64)[..., None]
    parts = [(values - 0.5) * vis[..., None]]
    if f.context_dim > 0:
        if context is None:
            context = np.zeros(values.shape[:-1] + (f.context_dim,))
        parts.append(as_f64(context))
    parts.append(flag)
    x0 = np.concatenate(parts, axis=-1)
    h = linear(x0, f.in_w.value, f.in_b.value)
    caches = []
    for blk in f.blocks:
        h, cache = mixer_block(h, blk)
        caches.append(cache)
    return h, FeaturizerCache(x0, caches)


def featurizer_bwd(gh: Array, f: FeaturizerParams,
                   cache: FeaturizerCache) -> None:
    for blk, blk_cache in zip(reversed(f.blocks),
                              reversed(cache.block_caches)):
        gh = mixer_block_bwd(gh, blk, blk_cache)
    _, gw, gb = linear_bwd(gh, cache.x0, f.in_w.value)
    f.in_w.grad += gw
    f.in_b.grad += gb
