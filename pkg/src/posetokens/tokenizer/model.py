"""Compositional pose tokenizer: encoder, shared codebook, decoder.

The encoder lifts per-joint inputs to a hidden width, fuses joints with
token/channel-mixing blocks, then projects across the joint axis down to the
token count and across channels down to the code dimension. The decoder
mirrors it with a single mixing block. Hidden joints contribute a learned
mask embedding plus a flag channel instead of coordinates, so "hidden" is
distinguishable from "at the origin".

With ``compositional=False`` the cross-joint pieces disappear: one token per
joint, no token mixing anywhere, and a separate codebook group per joint.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..checkpoint import (
    CheckpointError,
    expect_shape,
    read_checkpoint,
    write_checkpoint,
)
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
from .codebook import Codebook, init_codebook, lookup, quantize


@dataclass
class TokenizerConfig:
    # architecture
    joints: int = 16
    dims: int = 2
    num_tokens: int = 8
    codebook_size: int = 128
    code_dim: int = 32
    hidden_dim: int = 64
    encoder_blocks: int = 4
    decoder_blocks: int = 1
    compositional: bool = True
    context_dim: int = 0
    token_hidden_ratio: float = 0.5
    channel_hidden_ratio: float = 4.0
    init_std: float = 0.02
    # quantization / codebook learning
    commitment_weight: float = 0.25
    ema_decay: float = 0.99
    ema_epsilon: float = 1e-5
    dead_code_threshold: float = 1e-2
    # masked-joint training and context guidance
    mask_rate_min: float = 0.0
    mask_rate_max: float = 0.5
    context_jitter: float = 0.05
    # optimization
    epochs: int = 16
    batch_size: int = 256
    learning_rate: float = 1e-2
    weight_decay: float = 0.15
    warmup_steps: int = 500

    def validate(self) -> None:
        for name in ("joints", "num_tokens", "codebook_size", "code_dim",
                     "hidden_dim", "encoder_blocks", "decoder_blocks",
                     "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"tokenizer config: {name} must be positive")
        if self.dims not in (2, 3):
            raise ValueError("tokenizer config: dims must be 2 or 3")
        if not self.compositional and self.num_tokens != self.joints:
            raise ValueError(
                "tokenizer config: per-joint variant requires num_tokens == joints"
            )
        if not 0.0 <= self.mask_rate_min <= self.mask_rate_max < 1.0:
            raise ValueError("tokenizer config: bad mask rate range")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("tokenizer config: ema_decay must be in (0, 1)")
        if self.context_dim < 0 or self.commitment_weight < 0:
            raise ValueError("tokenizer config: negative hyperparameter")

    @property
    def codebook_groups(self) -> int:
        return 1 if self.compositional else self.num_tokens

    @property
    def input_width(self) -> int:
        return self.dims + self.context_dim + 1  # coords + context + hidden flag


def paper_scale_reference(**overrides) -> TokenizerConfig:
    """The larger published operating point: 34 tokens over 1024 entries."""
    cfg = TokenizerConfig(num_tokens=34, codebook_size=1024, code_dim=64,
                          hidden_dim=128)
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class EncoderParams:
    in_w: Param
    in_b: Param
    mask_embed: Param
    blocks: list[MixerBlockParams]
    joint_w: Param | None   # (K, M); None for the per-joint variant
    joint_b: Param | None
    chan_w: Param
    chan_b: Param

    def params(self) -> list[Param]:
        out = [self.in_w, self.in_b, self.mask_embed]
        for blk in self.blocks:
            out += blk.params()
        if self.joint_w is not None:
            out += [self.joint_w, self.joint_b]
        out += [self.chan_w, self.chan_b]
        return out


@dataclass
class DecoderParams:
    code_w: Param
    code_b: Param
    token_w: Param | None   # (M, K); None for the per-joint variant
    token_b: Param | None
    blocks: list[MixerBlockParams]
    out_w: Param
    out_b: Param

    def params(self) -> list[Param]:
        out = [self.code_w, self.code_b]
        if self.token_w is not None:
            out += [self.token_w, self.token_b]
        for blk in self.blocks:
            out += blk.params()
        out += [self.out_w, self.out_b]
        return out


@dataclass
class TokenizerModel:
    config: TokenizerConfig
    encoder: EncoderParams
    decoder: DecoderParams
    codebook: Codebook

    def params(self) -> list[Param]:
        """Gradient-trained parameters; codebook entries are excluded on
        purpose (they move only through EMA updates)."""
        return self.encoder.params() + self.decoder.params()


def make_tokenizer(config: TokenizerConfig, rng: np.random.Generator,
                   ) -> TokenizerModel:
    config.validate()
    c = config
    std = c.init_std

    def w(name, shape):
        return Param(name, rng.normal(0.0, std, size=shape))

    def zeros(name, shape):
        return Param(name, np.zeros(shape), decay=False)

    enc_blocks = [
        init_mixer_block(rng, f"enc.blocks.{i}", tokens=c.joints,
                         channels=c.hidden_dim,
                         token_hidden_ratio=c.token_hidden_ratio,
                         channel_hidden_ratio=c.channel_hidden_ratio,
                         mix_tokens=c.compositional, init_std=std)
        for i in range(c.encoder_blocks)
    ]
    encoder = EncoderParams(
        in_w=w("enc.in_w", (c.input_width, c.hidden_dim)),
        in_b=zeros("enc.in_b", c.hidden_dim),
        mask_embed=Param("enc.mask_embed",
                         rng.normal(0.0, std, size=c.hidden_dim), decay=False),
        blocks=enc_blocks,
        joint_w=w("enc.joint_w", (c.joints, c.num_tokens)) if c.compositional else None,
        joint_b=zeros("enc.joint_b", c.num_tokens) if c.compositional else None,
        chan_w=w("enc.chan_w", (c.hidden_dim, c.code_dim)),
        chan_b=zeros("enc.chan_b", c.code_dim),
    )
    dec_blocks = [
        init_mixer_block(rng, f"dec.blocks.{i}", tokens=c.joints,
                         channels=c.hidden_dim,
                         token_hidden_ratio=c.token_hidden_ratio,
                         channel_hidden_ratio=c.channel_hidden_ratio,
                         mix_tokens=c.compositional, init_std=std)
        for i in range(c.decoder_blocks)
    ]
    decoder = DecoderParams(
        code_w=w("dec.code_w", (c.code_dim, c.hidden_dim)),
        code_b=zeros("dec.code_b", c.hidden_dim),
        token_w=w("dec.token_w", (c.num_tokens, c.joints)) if c.compositional else None,
        token_b=zeros("dec.token_b", c.joints) if c.compositional else None,
        blocks=dec_blocks,
        out_w=w("dec.out_w", (c.hidden_dim, c.dims)),
        out_b=zeros("dec.out_b", c.dims),
    )
    codebook = init_codebook(rng, c.codebook_groups, c.codebook_size,
                             c.code_dim, c.ema_decay, c.ema_epsilon)
    return TokenizerModel(config, encoder, decoder, codebook)


def _with_batch(x: Array) -> tuple[Array, bool]:
    if x.ndim == 2:
        return x[None], True
    return x, False


@dataclass
class EncodeCache:
    x0: Array
    flag: Array
    block_caches: list
    h_joint_in: Array | None   # transposed input to the joint projection
    t_in: Array                # input to the channel projection


def encode(model: TokenizerModel, coords: Array, vis: Array | None = None,
           context: Array | None = None) -> tuple[Array, EncodeCache]:
    """Token features (..., M, N) for normalized coordinates (..., K, D)."""
    c = model.config
    e = model.encoder
    coords, squeezed = _with_batch(as_f64(coords))
    if coords.shape[-2:] != (c.joints, c.dims):
        raise NumericsError(
            f"encode: pose shape {coords.shape[-2:]} != ({c.joints}, {c.dims})"
        )
    if vis is None:
        vis = np.ones(coords.shape[:-1], dtype=bool)
    else:
        vis = np.broadcast_to(np.asarray(vis, dtype=bool), coords.shape[:-1])
    if not vis.any(axis=-1).all():
        raise NumericsError("encode: a pose with every joint hidden")
    flag = (~vis).astype(np.float64)[..., None]
    # center visible coordinates; hidden joints contribute exactly zero
    parts = [(coords - 0.5) * vis[..., None]]
    if c.context_dim > 0:
        if context is None:
            context = np.zeros(coords.shape[:-1] + (c.context_dim,))
        else:
            context = as_f64(context)
            if squeezed and context.ndim == 2:
                context = context[None]
        parts.append(context)
    elif context is not None:
        raise NumericsError("encode: context given but context_dim is 0")
    parts.append(flag)
    x0 = np.concatenate(parts, axis=-1)
    h = linear(x0, e.in_w.value, e.in_b.value)
    h = h + flag * e.mask_embed.value
    block_caches = []
    for blk in e.blocks:
        h, cache = mixer_block(h, blk)
        block_caches.append(cache)
    if c.compositional:
        h_joint_in = np.swapaxes(h, -1, -2)  # (..., H, K)
        t = np.swapaxes(
            linear(h_joint_in, e.joint_w.value, e.joint_b.value), -1, -2
        )  # (..., M, H)
    else:
        h_joint_in = None
        t = h
    feats = linear(t, e.chan_w.value, e.chan_b.value)
    if squeezed:
        feats = feats[0]
    return feats, EncodeCache(x0, flag, block_caches, h_joint_in, t)


def encode_bwd(gfeats: Array, model: TokenizerModel, cache: EncodeCache) -> None:
    """Accumulate encoder parameter gradients for d loss / d token features."""
    e = model.encoder
    if gfeats.ndim == 2:
        gfeats = gfeats[None]
    gt, gw, gb = linear_bwd(gfeats, cache.t_in, e.chan_w.value)
    e.chan_w.grad += gw
    e.chan_b.grad += gb
    if model.config.compositional:
        gtt = np.swapaxes(gt, -1, -2)
        gh_t, gw, gb = linear_bwd(gtt, cache.h_joint_in, e.joint_w.value)
        e.joint_w.grad += gw
        e.joint_b.grad += gb
        gh = np.swapaxes(gh_t, -1, -2)
    else:
        gh = gt
    for blk, blk_cache in zip(reversed(e.blocks), reversed(cache.block_caches)):
        gh = mixer_block_bwd(gh, blk, blk_cache)
    e.mask_embed.grad += (gh * cache.flag).sum(axis=tuple(range(gh.ndim - 1)))
    _, gw, gb = linear_bwd(gh, cache.x0, e.in_w.value)
    e.in_w.grad += gw
    e.in_b.grad += gb


@dataclass
class DecodeCache:
    z: Array
    block_caches: list
    h_token_in: Array | None
    h_out_in: Array


def decode(model: TokenizerModel, z: Array) -> tuple[Array, DecodeCache]:
    """Pose coordinates (..., K, D) from code vectors (..., M, N)."""
    c = model.config
    d = model.decoder
    z, squeezed = _with_batch(as_f64(z))
    if z.shape[-2:] != (c.num_tokens, c.code_dim):
        raise NumericsError(
            f"decode: feature shape {z.shape[-2:]} != "
            f"({c.num_tokens}, {c.code_dim})"
        )
    h = linear(z, d.code_w.value, d.code_b.value)  # (..., M, H)
    if c.compositional:
        h_token_in = np.swapaxes(h, -1, -2)  # (..., H, M)
        h = np.swapaxes(
            linear(h_token_in, d.token_w.value, d.token_b.value), -1, -2
        )  # (..., K, H)
    else:
        h_token_in = None
    block_caches = []
    for blk in d.blocks:
        h, cache = mixer_block(h, blk)
        block_caches.append(cache)
    out = linear(h, d.out_w.value, d.out_b.value)
    if squeezed:
        out = out[0]
    return out, DecodeCache(z, block_caches, h_token_in, h)


def decode_bwd(gout: Array, model: TokenizerModel, cache: DecodeCache,
               accumulate: bool = True) -> Array:
    """d loss / d code vectors; with accumulate=False the decoder parameters
    receive no gradient (the frozen-decoder path of downstream training)."""
    c = model.config
    d = model.decoder
    if gout.ndim == 2:
        gout = gout[None]

    def acc(param: Param, grad: Array) -> None:
        if accumulate:
            param.grad += grad

    gh, gw, gb = linear_bwd(gout, cache.h_out_in, d.out_w.value)
    acc(d.out_w, gw)
    acc(d.out_b, gb)
    if accumulate:
        for blk, blk_cache in zip(reversed(d.blocks),
                                  reversed(cache.block_caches)):
            gh = mixer_block_bwd(gh, blk, blk_cache)
    else:
        # walk the same chain without touching parameter grads
        for blk, blk_cache in zip(reversed(d.blocks),
                                  reversed(cache.block_caches)):
            gh = _mixer_input_grad(gh, blk, blk_cache)
    if c.compositional:
        ght = np.swapaxes(gh, -1, -2)
        gh_token, gw, gb = linear_bwd(ght, cache.h_token_in, d.token_w.value)
        acc(d.token_w, gw)
        acc(d.token_b, gb)
        gh = np.swapaxes(gh_token, -1, -2)
    gz, gw, gb = linear_bwd(gh, cache.z, d.code_w.value)
    acc(d.code_w, gw)
    acc(d.code_b, gb)
    return gz


def _mixer_input_grad(gy: Array, p: MixerBlockParams, c) -> Array:
    """mixer_block_bwd without parameter accumulation."""
    from ..numerics.ops import gelu_bwd, layernorm_bwd

    gch, _, _ = linear_bwd(gy, c.ch, p.chan_w2.value)
    gch_pre = gelu_bwd(gch, c.ch_pre, c.ch_deriv)
    gn2, _, _ = linear_bwd(gch_pre, c.n2, p.chan_w1.value)
    gu_norm, _, _ = layernorm_bwd(gn2, c.n2_cache)
    gu = gy + gu_norm
    if not p.mix_tokens:
        return gu
    gto = np.swapaxes(gu, -1, -2)
    gth, _, _ = linear_bwd(gto, c.th, p.token_w2.value)
    gth_pre = gelu_bwd(gth, c.th_pre, c.th_deriv)
    gn1t, _, _ = linear_bwd(gth_pre, c.n1t, p.token_w1.value)
    gn1 = np.swapaxes(gn1t, -1, -2)
    gx_norm, _, _ = layernorm_bwd(gn1, c.n1_cache)
    return gu + gx_norm


def tokenize(model: TokenizerModel, coords: Array, vis: Array | None = None,
             context: Array | None = None) -> Array:
    """Integer token indices (..., M) for a pose or batch of poses."""
    feats, _ = encode(model, coords, vis, context)
    indices, _ = quantize(model.codebook, feats)
    return indices


def detokenize(model: TokenizerModel, indices: Array) -> Array:
    """Decode token indices (..., M) back to pose coordinates (..., K, D)."""
    indices = np.asarray(indices)
    if indices.shape[-1] != model.config.num_tokens:
        raise ValueError(
            f"detokenize: expected {model.config.num_tokens} indices per pose"
        )
    z = lookup(model.codebook, indices)
    out, _ = decode(model, z)
    return out


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------

def tokenizer_tensors(model: TokenizerModel) -> dict[str, Array]:
    tensors = {p.name: p.value for p in model.params()}
    tensors.update(model.codebook.tensors())
    return tensors


def save_tokenizer(model: TokenizerModel, path) -> None:
    meta = {"kind": "tokenizer", "config": asdict(model.config)}
    write_checkpoint(path, tokenizer_tensors(model), meta)


def config_from_meta(meta: dict, expected_kind: str) -> dict:
    if meta.get("kind") != expected_kind:
        raise CheckpointError(
            f"checkpoint kind {meta.get('kind')!r}, expected {expected_kind!r}"
        )
    return meta["config"]


def load_tokenizer(path) -> TokenizerModel:
    tensors, meta = read_checkpoint(path)
    cfg_dict = config_from_meta(meta, "tokenizer")
    unknown = set(cfg_dict) - {f.name for f in
                               TokenizerConfig.__dataclass_fields__.values()}
    if unknown:
        raise CheckpointError(f"unknown tokenizer config keys: {sorted(unknown)}")
    config = TokenizerConfig(**cfg_dict)
    model = make_tokenizer(config, np.random.default_rng(0))
    for p in model.params():
        p.value[...] = expect_shape(tensors, p.name, p.value.shape)
    cb = model.codebook
    cb.entries[...] = expect_shape(tensors, "codebook.entries", cb.entries.shape)
    cb.ema_size[...] = expect_shape(tensors, "codebook.ema_size", cb.ema_size.shape)
    cb.ema_sum[...] = expect_shape(tensors, "codebook.ema_sum", cb.ema_sum.shape)
    return model
