"""Keypoint metrics: PCK, occluded-joint PCK, per-joint error breakdowns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def _check_pose_shapes(preds: Array, gts: Array) -> tuple[Array, Array]:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape or preds.ndim < 2:
        raise ValueError(f"pose shape mismatch: {preds.shape} vs {gts.shape}")
    return preds, gts


def joint_errors(preds: Array, gts: Array) -> Array:
    """Per-joint L2 distances; shape (..., K)."""
    preds, gts = _check_pose_shapes(preds, gts)
    return np.linalg.norm(preds - gts, axis=-1)


def pck(preds: Array, gts: Array, threshold: float,
        mask: Array | None = None) -> float:
    """Fraction of (optionally mask-selected) joints within ``threshold``."""
    err = joint_errors(preds, gts)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != err.shape:
            raise ValueError(f"mask shape {mask.shape} != joints {err.shape}")
        err = err[mask]
    if err.size == 0:
        raise ValueError("pck: no joints selected")
    return float((err <= threshold).mean())


def occluded_pck(preds: Array, gts: Array, vis: Array,
                 threshold: float) -> float | None:
    """PCK restricted to joints flagged invisible; None when there are none
    (an explicitly empty metric, not zero)."""
    vis = np.asarray(vis, dtype=bool)
    hidden = ~vis
    if not hidden.any():
        return None
    return pck(preds, gts, threshold, mask=hidden)


def mean_per_joint_error(preds: Array, gts: Array,
                         mask: Array | None = None) -> float:
    """Mean L2 joint error in unit-box units (position-error analog)."""
    err = joint_errors(preds, gts)
    if mask is not None:
        err = err[np.asarray(mask, dtype=bool)]
    if err.size == 0:
        raise ValueError("mean_per_joint_error: no joints selected")
    return float(err.mean())


def per_joint_pck(preds: Array, gts: Array, threshold: float) -> Array:
    """PCK per joint index; shape (K,)."""
    err = joint_errors(preds, gts)
    flat = err.reshape(-1, err.shape[-1])
    return (flat <= threshold).mean(axis=0)


def bone_length_violation(preds: Array, edges, gt_lengths: Array) -> float:
    """Mean absolute deviation of predicted bone lengths from the skeleton's.

    Lower means the prediction respects the articulated structure better.
    """
    preds = np.asarray(preds, dtype=np.float64)
    total = 0.0
    for (parent, child), length in zip(edges, gt_lengths):
        seg = np.linalg.norm(preds[..., child, :] - preds[..., parent, :],
                             axis=-1)
        total += float(np.abs(seg - length).mean())
    return total / max(len(list(edges)), 1)


@dataclass
class MetricsReport:
    """Bundle of the quantities the evaluation commands report."""

    pck: dict[float, float] = field(default_factory=dict)
    mean_error: float | None = None
    occluded_pck: dict[float, float | None] = field(default_factory=dict)
    per_joint: list[float] = field(default_factory=list)
    token_accuracy: float | None = None
    codebook_usage: list[int] = field(default_factory=list)
    codebook_perplexity: float | None = None

    def to_dict(self) -> dict:
        return {
            "pck": {str(k): v for k, v in self.pck.items()},
            "mean_error": self.mean_error,
            "occluded_pck": {str(k): v for k, v in self.occluded_pck.items()},
            "per_joint": list(self.per_joint),
            "token_accuracy": self.token_accuracy,
            "codebook_usage": [int(u) for u in self.codebook_usage],
            "codebook_perplexity": self.codebook_perplexity,
        }


def pose_report(preds: Array, gts: Array, vis: Array | None,
                thresholds: tuple[float, ...] = (0.05, 0.1)) -> MetricsReport:
    report = MetricsReport()
    for t in thresholds:
        report.pck[t] = pck(preds, gts, t)
        if vis is not None:
            report.occluded_pck[t] = occluded_pck(preds, gts, vis, t)
    report.mean_error = mean_per_joint_error(preds, gts)
    report.per_joint = [float(x) for x in per_joint_pck(preds, gts,
                                                        thresholds[0])]
    return report
