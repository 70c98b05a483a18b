"""Token-classification head over partial, noisy pose observations.

The featurizer embeds per-joint observations and fuses them with mixing
blocks over (joints, obs_hidden); a flatten projection reshapes the fused
features into (num_tokens, code_dim); four mixing blocks and a shared linear
head produce per-token classification logits over the codebook.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..checkpoint import (
    CheckpointError,
    expect_shape,
    file_sha256,
    read_checkpoint,
    write_checkpoint,
)
from ..numerics import (
    Array,
    MixerBlockParams,
    Param,
    as_f64,
    init_mixer_block,
    linear,
    linear_bwd,
    mixer_block,
    mixer_block_bwd,
)
from ..posedata.generate import sample_masks
from ..tokenizer.model import TokenizerModel, load_tokenizer
from .featurizer import (
    FeaturizerParams,
    featurizer_bwd,
    featurizer_forward,
    make_featurizer,
)


@dataclass
class EstimatorConfig:
    # featurizer + head
    obs_hidden: int = 64
    featurizer_blocks: int = 2
    head_blocks: int = 4          # published head depth
    context_dim: int = 0
    token_hidden_ratio: float = 0.5
    channel_hidden_ratio: float = 4.0
    init_std: float = 0.1
    # observation model
    noise_std: float = 0.02
    mask_rate_min: float = 0.0
    mask_rate_max: float = 0.6
    # losses
    rec_loss: bool = True
    soft_mode: str = "softmax"    # or "raw": no normalization before mixing
    # optimization
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 8e-4
    weight_decay: float = 0.05
    warmup_steps: int = 500

    def validate(self) -> None:
        for name in ("obs_hidden", "featurizer_blocks", "head_blocks",
                     "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"estimator config: {name} must be positive")
        if self.soft_mode not in ("softmax", "raw"):
            raise ValueError("estimator config: soft_mode must be softmax|raw")
        if not 0.0 <= self.mask_rate_min <= self.mask_rate_max < 1.0:
            raise ValueError("estimator config: bad mask rate range")
        if self.noise_std < 0:
            raise ValueError("estimator config: negative noise")


@dataclass
class Observation:
    """Per-joint inputs: noisy coordinates for visible joints, zeros for
    hidden ones, plus the visibility flags the head also sees."""

    values: Array   # (..., K, D)
    vis: Array      # (..., K) bool
    context: Array | None = None

    def __post_init__(self):
        self.values = as_f64(self.values)
        self.vis = np.asarray(self.vis, dtype=bool)


def make_observations(coords: Array, rng: np.random.Generator,
                      noise_std: float,
                      mask_rate_range: tuple[float, float]) -> Observation:
    """Noise + independent joint hiding; at least one joint stays visible."""
    coords = as_f64(coords)
    if coords.ndim == 2:
        coords = coords[None]
    batch, k, _ = coords.shape
    lo, hi = mask_rate_range
    if hi > 0:
        masked = sample_masks(batch, k, mask_rate_range, rng)
    else:
        masked = np.zeros((batch, k), dtype=bool)
    vis = ~masked
    noisy = coords + rng.normal(0.0, noise_std, size=coords.shape) \
        if noise_std > 0 else coords.copy()
    return Observation(noisy * vis[..., None], vis)


@dataclass
class HeadParams:
    featurizer: FeaturizerParams
    flat_w: Param
    flat_b: Param
    head_blocks: list[MixerBlockParams]
    logit_w: Param
    logit_b: Param

    def params(self) -> list[Param]:
        out = self.featurizer.params()
        out += [self.flat_w, self.flat_b]
        for blk in self.head_blocks:
            out += blk.params()
        out += [self.logit_w, self.logit_b]
        return out


@dataclass
class EstimatorModel:
    config: EstimatorConfig
    head: HeadParams
    tokenizer: TokenizerModel   # frozen: read-only at training and inference

    def params(self) -> list[Param]:
        """Stage-II trains the head only; tokenizer parameters are absent."""
        return self.head.params()


def make_estimator(config: EstimatorConfig, tokenizer: TokenizerModel,
                   rng: np.random.Generator) -> EstimatorModel:
    config.validate()
    c = config
    t = tokenizer.config
    std = c.init_std

    def w(name, shape):
        return Param(name, rng.normal(0.0, std, size=shape))

    def zeros(name, shape):
        return Param(name, np.zeros(shape), decay=False)

    featurizer = make_featurizer(
        rng, "head.featurizer", joints=t.joints, dims=t.dims,
        context_dim=c.context_dim, hidden=c.obs_hidden,
        blocks=c.featurizer_blocks, token_hidden_ratio=c.token_hidden_ratio,
        channel_hidden_ratio=c.channel_hidden_ratio, init_std=std)
    head_blocks = [
        init_mixer_block(rng, f"head.head_blocks.{i}", tokens=t.num_tokens,
                         channels=t.code_dim,
                         token_hidden_ratio=c.token_hidden_ratio,
                         channel_hidden_ratio=c.channel_hidden_ratio,
                         init_std=std)
        for i in range(c.head_blocks)
    ]
    head = HeadParams(
        featurizer=featurizer,
        flat_w=w("head.flat_w", (t.joints * c.obs_hidden,
                                 t.num_tokens * t.code_dim)),
        flat_b=zeros("head.flat_b", t.num_tokens * t.code_dim),
        head_blocks=head_blocks,
        logit_w=w("head.logit_w", (t.code_dim, t.codebook_size)),
        logit_b=zeros("head.logit_b", t.codebook_size),
    )
    return EstimatorModel(config, head, tokenizer)


@dataclass
class HeadCache:
    feat_cache: object
    flat_in: Array
    head_caches: list
    logit_in: Array


def head_forward(model: EstimatorModel, obs: Observation,
                 ) -> tuple[Array, HeadCache]:
    """Per-token classification logits (..., M, V)."""
    c = model.config
    t = model.tokenizer.config
    values = obs.values
    squeezed = values.ndim == 2
    if squeezed:
        values = values[None]
    h, feat_cache = featurizer_forward(model.head.featurizer, values,
                                       obs.vis, obs.context)
    flat_in = h.reshape(h.shape[:-2] + (t.joints * c.obs_hidden,))
    s = linear(flat_in, model.head.flat_w.value, model.head.flat_b.value)
    s = s.reshape(s.shape[:-1] + (t.num_tokens, t.code_dim))
    head_caches = []
    for blk in model.head.head_blocks:
        s, cache = mixer_block(s, blk)
        head_caches.append(cache)
    logits = linear(s, model.head.logit_w.value, model.head.logit_b.value)
    if squeezed:
        logits = logits[0]
    return logits, HeadCache(feat_cache, flat_in, head_caches, s)


def head_bwd(glogits: Array, model: EstimatorModel, cache: HeadCache) -> None:
    """Accumulate head parameter gradients for d loss / d logits."""
    h = model.head
    t = model.tokenizer.config
    c = model.config
    if glogits.ndim == 2:
        glogits = glogits[None]
    gs, gw, gb = linear_bwd(glogits, cache.logit_in, h.logit_w.value)
    h.logit_w.grad += gw
    h.logit_b.grad += gb
    for blk, blk_cache in zip(reversed(h.head_blocks),
                              reversed(cache.head_caches)):
        gs = mixer_block_bwd(gs, blk, blk_cache)
    gflat = gs.reshape(gs.shape[:-2] + (t.num_tokens * t.code_dim,))
    gfeat, gw, gb = linear_bwd(gflat, cache.flat_in, h.flat_w.value)
    h.flat_w.grad += gw
    h.flat_b.grad += gb
    gh = gfeat.reshape(gfeat.shape[:-1] + (t.joints, c.obs_hidden))
    featurizer_bwd(gh, h.featurizer, cache.feat_cache)


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------

def save_estimator(model: EstimatorModel, path, tokenizer_path) -> None:
    """The sidecar embeds the SHA-256 of the tokenizer checkpoint; loading
    against a different tokenizer is refused."""
    meta = {
        "kind": "estimator",
        "config": asdict(model.config),
        "tokenizer_sha256": file_sha256(tokenizer_path),
    }
    tensors = {p.name: p.value for p in model.head.params()}
    write_checkpoint(path, tensors, meta)


def load_estimator(path, tokenizer_path) -> EstimatorModel:
    tensors, meta = read_checkpoint(path)
    if meta.get("kind") != "estimator":
        raise CheckpointError(f"checkpoint kind {meta.get('kind')!r}, "
                              "expected 'estimator'")
    actual = file_sha256(tokenizer_path)
    expected = meta.get("tokenizer_sha256")
    if actual != expected:
        raise CheckpointError(
            f"tokenizer checkpoint hash mismatch: estimator was trained "
            f"against {expected}, got {actual}"
        )
    cfg_dict = meta["config"]
    unknown = set(cfg_dict) - {f.name for f in
                               EstimatorConfig.__dataclass_fields__.values()}
    if unknown:
        raise CheckpointError(f"unknown estimator config keys: {sorted(unknown)}")
    config = EstimatorConfig(**cfg_dict)
    tokenizer = load_tokenizer(tokenizer_path)
    model = make_estimator(config, tokenizer, np.random.default_rng(0))
    for p in model.head.params():
        p.value[...] = expect_shape(tensors, p.name, p.value.shape)
    return model
