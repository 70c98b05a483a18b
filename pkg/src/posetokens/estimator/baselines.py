"""Representation baselines: direct coordinate regression and per-axis bins.

Both reuse the token head's observation featurizer so the comparison isolates
the output representation, mirroring the published four-way comparison (the
heatmap arm needs image grids and is out of scope here).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..evaluation.metrics import occluded_pck, pck
from ..numerics import (
    AdamW,
    Array,
    NumericsError,
    Param,
    Schedule,
    cross_entropy,
    linear,
    linear_bwd,
    smooth_l1,
    softmax,
)
from ..posedata.generate import stack_poses
from .featurizer import (
    FeaturizerParams,
    featurizer_bwd,
    featurizer_forward,
    make_featurizer,
)
from .model import EstimatorConfig, Observation, make_observations
from .training import EvalProtocol, TrainingDiverged


@dataclass
class RegressionModel:
    """Per-joint linear readout of the fused features to raw coordinates."""

    config: EstimatorConfig
    joints: int
    dims: int
    featurizer: FeaturizerParams
    out_w: Param
    out_b: Param

    def params(self) -> list[Param]:
        return self.featurizer.params() + [self.out_w, self.out_b]


def make_regression(config: EstimatorConfig, joints: int, dims: int,
                    rng: np.random.Generator) -> RegressionModel:
    config.validate()
    c = config
    featurizer = make_featurizer(
        rng, "reg.featurizer", joints=joints, dims=dims,
        context_dim=c.context_dim, hidden=c.obs_hidden,
        blocks=c.featurizer_blocks, token_hidden_ratio=c.token_hidden_ratio,
        channel_hidden_ratio=c.channel_hidden_ratio, init_std=c.init_std)
    return RegressionModel(
        config=c, joints=joints, dims=dims, featurizer=featurizer,
        out_w=Param("reg.out_w",
                    rng.normal(0.0, c.init_std, size=(c.obs_hidden, dims))),
        out_b=Param("reg.out_b", np.full(dims, 0.5), decay=False),
    )


def regression_predict(model: RegressionModel, obs: Observation) -> Array:
    h, _ = featurizer_forward(model.featurizer, obs.values, obs.vis,
                              obs.context)
    return linear(h, model.out_w.value, model.out_b.value)


def regression_loss(model: RegressionModel, obs: Observation,
                    gt_coords: Array, accumulate: bool = True) -> float:
    h, cache = featurizer_forward(model.featurizer, obs.values, obs.vis,
                                  obs.context)
    pred = linear(h, model.out_w.value, model.out_b.value)
    loss, gpred = smooth_l1(pred, np.asarray(gt_coords, dtype=np.float64))
    if not np.isfinite(loss):
        raise NumericsError("regression_loss: non-finite loss")
    if accumulate:
        gh, gw, gb = linear_bwd(gpred, h, model.out_w.value)
        model.out_w.grad += gw
        model.out_b.grad += gb
        featurizer_bwd(gh, model.featurizer, cache)
    return loss


@dataclass
class BinsModel:
    """Per-axis classification into uniform bins over [0, 1], decoded by the
    expectation of the bin distribution."""

    config: EstimatorConfig
    joints: int
    dims: int
    num_bins: int
    featurizer: FeaturizerParams
    out_w: Param
    out_b: Param

    def params(self) -> list[Param]:
        return self.featurizer.params() + [self.out_w, self.out_b]

    def bin_centers(self) -> Array:
        return (np.arange(self.num_bins) + 0.5) / self.num_bins


def make_bins(config: EstimatorConfig, joints: int, dims: int,
              rng: np.random.Generator, num_bins: int = 64) -> BinsModel:
    config.validate()
    if num_bins < 2:
        raise ValueError("num_bins must be at least 2")
    c = config
    featurizer = make_featurizer(
        rng, "bins.featurizer", joints=joints, dims=dims,
        context_dim=c.context_dim, hidden=c.obs_hidden,
        blocks=c.featurizer_blocks, token_hidden_ratio=c.token_hidden_ratio,
        channel_hidden_ratio=c.channel_hidden_ratio, init_std=c.init_std)
    return BinsModel(
        config=c, joints=joints, dims=dims, num_bins=num_bins,
        featurizer=featurizer,
        out_w=Param("bins.out_w", rng.normal(
            0.0, c.init_std, size=(c.obs_hidden, dims * num_bins))),
        out_b=Param("bins.out_b", np.zeros(dims * num_bins), decay=False),
    )


def bin_labels(coords: Array, num_bins: int) -> Array:
    """Integer bin per coordinate axis; values clip into [0, B)."""
    idx = np.floor(np.asarray(coords) * num_bins).astype(np.int64)
    return np.clip(idx, 0, num_bins - 1)


def bins_logits(model: BinsModel, obs: Observation) -> tuple[Array, object, Array]:
    h, cache = featurizer_forward(model.featurizer, obs.values, obs.vis,
                                  obs.context)
    raw = linear(h, model.out_w.value, model.out_b.value)
    logits = raw.reshape(raw.shape[:-1] + (model.dims, model.num_bins))
    return logits, cache, h

def bins_expectation(logits: Array, centers: Array) -> Array:
    return softmax(logits) @ centers


def bins_predict(model: BinsModel, obs: Observation) -> Array:
    logits, _, _ = bins_logits(model, obs)
    return bins_expectation(logits, model.bin_centers())


def bins_loss(model: BinsModel, obs: Observation, gt_coords: Array,
              accumulate: bool = True) -> float:
    logits, cache, h = bins_logits(model, obs)
    labels = bin_labels(gt_coords, model.num_bins)
    loss, glogits = cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise NumericsError("bins_loss: non-finite loss")
    if accumulate:
        graw = glogits.reshape(glogits.shape[:-2]
                               + (model.dims * model.num_bins,))
        gh, gw, gb = linear_bwd(graw, h, model.out_w.value)
        model.out_w.grad += gw
        model.out_b.grad += gb
        featurizer_bwd(gh, model.featurizer, cache)
    return loss


def train_baseline(model: RegressionModel | BinsModel, train_poses, val_poses,
                   rng_seed: int,
                   eval_protocols: tuple[EvalProtocol, ...] = (
                       EvalProtocol(mask_rate=0.3), EvalProtocol(mask_rate=0.5)),
                   threshold: float = 0.05) -> list[dict]:
    """Shared loop for both baseline heads; mirrors the token-head training
    protocol (same observation model, optimizer, and schedule family)."""
    c = model.config
    if isinstance(model, BinsModel):
        loss_fn, predict_fn = bins_loss, bins_predict
    else:
        loss_fn, predict_fn = regression_loss, regression_predict
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 0xB5]))
    coords, _ = stack_poses(train_poses)
    val_coords, _ = stack_poses(val_poses) if val_poses else (None, None)
    n = coords.shape[0]
    batch = min(c.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    schedule = Schedule(c.learning_rate, c.warmup_steps,
                        max(c.epochs * steps_per_epoch, 1))
    opt = AdamW(model.params(), weight_decay=c.weight_decay, schedule=schedule)
    log: list[dict] = []
    for epoch in range(c.epochs):
        order = rng.permutation(n)
        losses = []
        for step in range(steps_per_epoch):
            sel = order[step * batch:(step + 1) * batch]
            obs = make_observations(coords[sel], rng, c.noise_std,
                                    (c.mask_rate_min, c.mask_rate_max))
            opt.zero_grad()
            try:
                losses.append(loss_fn(model, obs, coords[sel]))
            except NumericsError as err:
                raise TrainingDiverged(
                    f"epoch {epoch} step {step}: {err}") from err
            opt.step()
        record = {"epoch": epoch, "loss": float(np.mean(losses)),
                  "lr": opt.current_lr()}
        if val_coords is not None:
            pcks, occs = [], []
            for proto in eval_protocols:
                obs = proto.observations(val_coords)
                preds = predict_fn(model, obs)
                pcks.append(pck(preds, val_coords, threshold))
                occ = occluded_pck(preds, val_coords, obs.vis, threshold)
                if occ is not None:
                    occs.append(occ)
            record["pred_pck"] = float(np.mean(pcks))
            record["occluded_pck"] = float(np.mean(occs)) if occs else None
        log.append(record)
    return log
