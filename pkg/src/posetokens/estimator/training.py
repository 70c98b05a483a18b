"""Stage-II training: token classification with a frozen tokenizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation.metrics import occluded_pck, pck
from ..numerics import (
    AdamW,
    Array,
    NumericsError,
    Schedule,
    cross_entropy,
    smooth_l1,
    softmax,
    softmax_bwd,
)
from ..posedata.generate import stack_poses
from ..tokenizer.codebook import Codebook
from ..tokenizer.model import TokenizerModel, decode, decode_bwd, detokenize, tokenize
from .model import (
    EstimatorModel,
    HeadCache,
    Observation,
    head_bwd,
    head_forward,
    make_observations,
)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries epoch/step diagnostics."""


def gt_labels(tokenizer: TokenizerModel, coords: Array,
              chunk: int = 2048) -> Array:
    """Target token indices: encode the ground-truth poses with every joint
    visible and no guidance context."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 2:
        return tokenize(tokenizer, coords)
    out = []
    for start in range(0, coords.shape[0], chunk):
        out.append(tokenize(tokenizer, coords[start:start + chunk]))
    return np.concatenate(out, axis=0)


def soft_tokens(logits: Array, codebook: Codebook,
                mode: str = "softmax") -> tuple[Array, Array | None]:
    """Convex (softmax) combination of codebook entries per token row.

    Returns (features (..., M, N), row weights). With mode="raw" the logits
    multiply the entries directly, matching the unnormalized reading of the
    interpolation; rows then live outside the entry hull.
    """
    if mode == "softmax":
        weights = softmax(logits)
    elif mode == "raw":
        weights = logits
    else:
        raise ValueError(f"unknown soft-token mode {mode!r}")
    if codebook.groups == 1:
        feats = weights @ codebook.entries[0]
    else:
        feats = np.einsum("...mv,mvn->...mn", weights, codebook.entries)
    return feats, weights


def soft_tokens_bwd(gfeats: Array, codebook: Codebook, weights: Array,
                    mode: str = "softmax") -> Array:
    """d loss / d logits for soft_tokens (codebook entries are constants)."""
    if codebook.groups == 1:
        gweights = gfeats @ codebook.entries[0].T
    else:
        gweights = np.einsum("...mn,mvn->...mv", gfeats, codebook.entries)
    if mode == "softmax":
        return softmax_bwd(gweights, weights)
    return gweights


@dataclass
class EstimatorLossResult:
    loss: float
    ce_loss: float
    rec_loss: float
    logits: Array
    recon: Array | None


def estimator_loss(model: EstimatorModel, obs: Observation, gt_coords: Array,
                   labels: Array, accumulate: bool = True,
                   ) -> EstimatorLossResult:
    """Cross entropy on token logits plus (optionally) the reconstruction of
    the soft-token decode against the ground-truth pose.

    Gradients reach head parameters only: the decoder walk runs with
    accumulation disabled and the codebook is a constant, so the tokenizer is
    untouched no matter how many steps are taken.
    """
    gt_coords = np.asarray(gt_coords, dtype=np.float64)
    if gt_coords.ndim == 2:
        gt_coords = gt_coords[None]
    logits, head_cache = head_forward(model, obs)
    if logits.ndim == 2:
        logits = logits[None]
    ce, gce = cross_entropy(logits, labels)
    glogits = gce
    rec = 0.0
    recon = None
    if model.config.rec_loss:
        feats, weights = soft_tokens(logits, model.tokenizer.codebook,
                                     model.config.soft_mode)
        recon, dec_cache = decode(model.tokenizer, feats)
        rec, grecon = smooth_l1(recon, gt_coords)
        gfeats = decode_bwd(grecon, model.tokenizer, dec_cache,
                            accumulate=False)
        glogits = gce + soft_tokens_bwd(gfeats, model.tokenizer.codebook,
                                        weights, model.config.soft_mode)
    loss = ce + rec
    if not np.isfinite(loss):
        raise NumericsError("estimator_loss: non-finite loss")
    if accumulate:
        head_bwd(glogits, model, head_cache)
    return EstimatorLossResult(loss, ce, rec, logits, recon)


def predict(model: EstimatorModel, obs: Observation) -> Array:
    """Hard inference: argmax per token (lowest index wins ties), codebook
    lookup, decode. No refinement of any kind follows the decoder."""
    logits, _ = head_forward(model, obs)
    indices = np.argmax(logits, axis=-1)
    return detokenize(model.tokenizer, indices)


def token_accuracy(logits: Array, labels: Array) -> float:
    return float((np.argmax(logits, axis=-1) == labels).mean())


@dataclass
class EvalProtocol:
    """Deterministic observation generation for benchmarks."""

    noise_std: float = 0.02
    mask_rate: float = 0.3
    seed: int = 9000

    def observations(self, coords: Array) -> Observation:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, int(self.mask_rate * 1000)]))
        return make_observations(coords, rng, self.noise_std,
                                 (self.mask_rate, self.mask_rate))


def evaluate_estimator(model: EstimatorModel, coords: Array,
                       protocols: tuple[EvalProtocol, ...],
                       threshold: float = 0.05, chunk: int = 2048) -> dict:
    """Mean all-joint PCK and hidden-joint PCK over the given protocols."""
    pcks, occs = [], []
    for proto in protocols:
        obs = proto.observations(coords)
        preds = np.concatenate([
            predict(model, Observation(obs.values[s:s + chunk],
                                       obs.vis[s:s + chunk]))
            for s in range(0, coords.shape[0], chunk)
        ], axis=0)
        pcks.append(pck(preds, coords, threshold))
        occ = occluded_pck(preds, coords, obs.vis, threshold)
        if occ is not None:
            occs.append(occ)
    return {
        "pred_pck": float(np.mean(pcks)),
        "occluded_pck": float(np.mean(occs)) if occs else None,
    }


def train_estimator(model: EstimatorModel, train_poses, val_poses,
                    rng_seed: int,
                    eval_protocols: tuple[EvalProtocol, ...] = (
                        EvalProtocol(mask_rate=0.3), EvalProtocol(mask_rate=0.5)),
                    ) -> list[dict]:
    """Train the head in place against the frozen tokenizer; one record per
    epoch. Observations are drawn fresh every step from the configured noise
    and hiding rates; all randomness flows from ``rng_seed``."""
    c = model.config
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xE2]))
    coords, _ = stack_poses(train_poses)
    val_coords, _ = stack_poses(val_poses) if val_poses else (None, None)
    labels = gt_labels(model.tokenizer, coords)
    n = coords.shape[0]
    batch = min(c.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    schedule = Schedule(c.learning_rate, c.warmup_steps,
                        max(c.epochs * steps_per_epoch, 1))
    opt = AdamW(model.params(), weight_decay=c.weight_decay, schedule=schedule)

    log: list[dict] = []
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        losses, ces, recs, accs = [], [], [], []
        for step in range(steps_per_epoch):
            sel = order[step * batch:(step + 1) * batch]
            obs = make_observations(coords[sel], rng, c.noise_std,
                                    (c.mask_rate_min, c.mask_rate_max))
            opt.zero_grad()
            try:
                res = estimator_loss(model, obs, coords[sel], labels[sel])
            except NumericsError as err:
                raise TrainingDiverged(
                    f"epoch {epoch} step {step}: {err}") from err
            opt.step()
            losses.append(res.loss)
            ces.append(res.ce_loss)
            recs.append(res.rec_loss)
            accs.append(token_accuracy(res.logits, labels[sel]))
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "ce_loss": float(np.mean(ces)),
            "rec_loss": float(np.mean(recs)),
            "token_accuracy": float(np.mean(accs)),
            "lr": opt.current_lr(),
        }
        if val_coords is not None:
            record.update(evaluate_estimator(model, val_coords, eval_protocols))
        log.append(record)
    return log
