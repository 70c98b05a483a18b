"""Stage-I training: reconstruction + commitment loss, EMA codebook, MJM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation.metrics import pck
from ..numerics import AdamW, Array, NumericsError, Schedule, smooth_l1
from ..posedata.generate import sample_masks, stack_poses
from ..posedata.skeleton import Skeleton
from .codebook import (
    ema_update,
    lookup,
    quantize,
    seed_codebook_from_features,
    usage_counts,
    usage_perplexity,
)
from .model import TokenizerModel, decode, decode_bwd, encode, encode_bwd


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries epoch/step diagnostics."""


@dataclass
class FrozenQuantization:
    """Fixed token assignment for finite-difference checks.

    ``offset`` is (quantized - features) captured at the evaluation point, so
    the decoder input becomes features + offset: identical value, identity
    Jacobian — exactly what the straight-through gradient assumes.
    """

    indices: Array
    offset: Array


@dataclass
class PctLossResult:
    loss: float
    recon_loss: float
    commit_loss: float
    indices: Array
    token_feats: Array
    recon: Array
    masked: Array


def pct_loss(model: TokenizerModel, coords: Array,
             rng: np.random.Generator | None = None, *,
             masked: Array | None = None, context: Array | None = None,
             frozen: FrozenQuantization | None = None,
             accumulate: bool = True) -> PctLossResult:
    """Reconstruction + commitment loss with straight-through gradients.

    The reconstruction term covers every joint, hidden ones included. The
    commitment term pulls token features toward their (stop-gradient) nearest
    entries: per sample the sum over tokens of the squared L2 gap, scaled by
    the configured weight. Codebook entries receive no gradient here; they
    move only via ema_update.

    When ``rng`` is given, a fresh hidden-joint mask is drawn per sample from
    the configured rate range; ``masked`` supplies one explicitly instead.
    """
    c = model.config
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 2:
        coords = coords[None]
    batch = coords.shape[0]
    if masked is None:
        if rng is not None and c.mask_rate_max > 0:
            masked = sample_masks(batch, c.joints,
                                  (c.mask_rate_min, c.mask_rate_max), rng)
        else:
            masked = np.zeros((batch, c.joints), dtype=bool)
    else:
        masked = np.asarray(masked, dtype=bool)
        if masked.ndim == 1:
            masked = masked[None]

    feats, enc_cache = encode(model, coords, vis=~masked, context=context)
    if frozen is None:
        indices, quantized = quantize(model.codebook, feats)
        z = quantized
    else:
        indices = frozen.indices
        quantized = lookup(model.codebook, indices)
        z = feats + frozen.offset
    recon, dec_cache = decode(model, z)

    recon_loss, grecon = smooth_l1(recon, coords)
    gap = feats - quantized
    commit_loss = c.commitment_weight * float((gap * gap).sum()) / batch
    loss = recon_loss + commit_loss
    if not np.isfinite(loss):
        raise NumericsError("pct_loss: non-finite loss")

    if accumulate:
        gz = decode_bwd(grecon, model, dec_cache)
        # straight-through: decoder-input gradient passes to the features
        gfeats = gz + (2.0 * c.commitment_weight / batch) * gap
        encode_bwd(gfeats, model, enc_cache)
    return PctLossResult(loss, recon_loss, commit_loss, indices, feats,
                         recon, masked)


def build_context(coords: Array, masked: Array, skeleton: Skeleton,
                  rng: np.random.Generator, jitter: float) -> Array:
    """Per-joint guidance vectors: for each hidden joint, the jittered
    position of its nearest visible ancestor (or the first visible joint when
    the whole ancestor chain is hidden); zeros for visible joints.

    Guidance is therefore identically zero on fully visible poses, which keeps
    label extraction (all joints visible, no context) consistent with
    training-time encoding.
    """
    batch, k, _ = coords.shape
    vis = ~masked
    ctx = np.zeros_like(coords)
    chains: list[list[int]] = []
    for j in range(k):
        chain, a = [], skeleton.parent[j]
        while a >= 0:
            chain.append(a)
            a = skeleton.parent[a]
        chains.append(chain)
    fallback = np.argmax(vis, axis=1)  # first visible joint per sample
    rows = np.arange(batch)
    for j in range(k):
        needs = masked[:, j]
        if not needs.any():
            continue
        anchor = np.full(batch, -1, dtype=np.int64)
        for a in chains[j]:
            unset = (anchor < 0) & vis[:, a]
            anchor[unset] = a
        anchor[anchor < 0] = fallback[anchor < 0]
        picked = coords[rows, anchor]
        noise = rng.normal(0.0, jitter, size=picked.shape)
        ctx[needs, j] = picked[needs] + noise[needs]
    return ctx


def _revive_dead_entries(model: TokenizerModel, epoch_max_size: Array,
                         feats: Array, rng: np.random.Generator) -> int:
    """Reset entries whose EMA size stayed under the threshold all epoch to
    random token features from the given batch."""
    cb = model.codebook
    dead = epoch_max_size < model.config.dead_code_threshold
    count = int(dead.sum())
    if count == 0:
        return 0
    flat_feats = feats.reshape(-1, feats.shape[-1])
    for gi in range(cb.groups):
        rows = np.nonzero(dead[gi])[0]
        if rows.size == 0:
            continue
        pool = flat_feats if cb.groups == 1 else feats[:, gi, :]
        picks = rng.integers(0, pool.shape[0], size=rows.size)
        cb.entries[gi, rows] = pool[picks] + rng.normal(
            0.0, 1e-4, size=(rows.size, cb.dim))
        cb.ema_size[gi, rows] = 1.0
        cb.ema_sum[gi, rows] = cb.entries[gi, rows]
    return count


def reconstruction_metrics(model: TokenizerModel, coords: Array,
                           threshold: float = 0.05) -> dict:
    """Encode-quantize-decode quality on fully visible poses."""
    feats, _ = encode(model, coords)
    indices, quantized = quantize(model.codebook, feats)
    recon, _ = decode(model, quantized)
    err = np.linalg.norm(recon - coords, axis=-1)
    return {
        "recon_pck": pck(recon, coords, threshold),
        "recon_mean_error": float(err.mean()),
        "indices": indices,
    }


def train_tokenizer(model: TokenizerModel, train_poses, val_poses,
                    rng_seed: int, skeleton: Skeleton | None = None,
                    ) -> list[dict]:
    """Train in place; returns one metrics record per epoch.

    Deterministic for a fixed (model init, data, seed): a single generator
    drives shuffling, joint masking, guidance jitter, and dead-entry
    revival. Raises TrainingDiverged on a non-finite loss.
    """
    c = model.config
    if c.context_dim > 0 and skeleton is None:
        raise ValueError("context guidance needs the skeleton")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xA1]))
    coords, _ = stack_poses(train_poses)
    val_coords, _ = stack_poses(val_poses) if val_poses else (None, None)
    n = coords.shape[0]
    batch = min(c.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    schedule = Schedule(c.learning_rate, c.warmup_steps,
                        max(c.epochs * steps_per_epoch, 1))
    opt = AdamW(model.params(), weight_decay=c.weight_decay, schedule=schedule)

    # start entries on the feature manifold instead of a cold normal init
    warm = coords[:min(n, max(batch, c.codebook_size))]
    warm_feats, _ = encode(model, warm)
    seed_codebook_from_features(model.codebook, warm_feats, rng)

    log: list[dict] = []
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        epoch_max_size = np.zeros_like(model.codebook.ema_size)
        epoch_counts = np.zeros(model.codebook.groups * model.codebook.size,
                                dtype=np.int64)
        losses, recons, commits = [], [], []
        last_feats = None
        for step in range(steps_per_epoch):
            sel = order[step * batch:(step + 1) * batch]
            cb = coords[sel]
            masked = sample_masks(cb.shape[0], c.joints,
                                  (c.mask_rate_min, c.mask_rate_max), rng) \
                if c.mask_rate_max > 0 else np.zeros(cb.shape[:2], dtype=bool)
            context = None
            if c.context_dim > 0:
                context = build_context(cb, masked, skeleton, rng,
                                        c.context_jitter)
            opt.zero_grad()
            try:
                res = pct_loss(model, cb, masked=masked, context=context)
            except NumericsError as err:
                raise TrainingDiverged(
                    f"epoch {epoch} step {step}: {err}") from err
            opt.step()
            ema_update(model.codebook, res.token_feats, res.indices)
            epoch_max_size = np.maximum(epoch_max_size, model.codebook.ema_size)
            epoch_counts += usage_counts(model.codebook, res.indices)
            losses.append(res.loss)
            recons.append(res.recon_loss)
            commits.append(res.commit_loss)
            last_feats = res.token_feats
        revived = _revive_dead_entries(model, epoch_max_size, last_feats, rng)
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "recon_loss": float(np.mean(recons)),
            "commit_loss": float(np.mean(commits)),
            "perplexity": usage_perplexity(epoch_counts),
            "used_entries": int((epoch_counts > 0).sum()),
            "revived": revived,
            "lr": opt.current_lr(),
        }
        if val_coords is not None:
            rec = reconstruction_metrics(model, val_coords)
            record["val_recon_pck"] = rec["recon_pck"]
            record["val_recon_mean_error"] = rec["recon_mean_error"]
        log.append(record)
    return log
