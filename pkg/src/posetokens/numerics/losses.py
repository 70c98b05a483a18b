"""Scalar losses returning (value, gradient-wrt-first-argument)."""

from __future__ import annotations

import numpy as np

from .ops import Array, NumericsError, softmax


def smooth_l1(pred: Array, target: Array, weights: Array | None = None,
              threshold: float = 1.0) -> tuple[float, Array]:
    """Huber-style loss, mean over (weighted) elements.

    Per element e = pred - target:
        0.5 * e^2 / threshold      if |e| < threshold
        |e| - 0.5 * threshold      otherwise
    With threshold=1 this is the familiar smooth-L1 kernel. ``weights`` is an
    optional per-element weight array ( 0/1 masks included); the loss is
    sum(w * l) / sum(w).
    """
    if pred.shape != target.shape:
        raise NumericsError(
            f"smooth_l1: shape mismatch {pred.shape} vs {target.shape}"
        )
    e = pred - target
    ae = np.abs(e)
    quad = ae < threshold
    elem = np.where(quad, 0.5 * e * e / threshold, ae - 0.5 * threshold)
    gelem = np.where(quad, e / threshold, np.sign(e))
    if weights is None:
        total = float(elem.size)
        loss = float(elem.sum() / total)
        grad = gelem / total
    else:
        if weights.shape != pred.shape:
            raise NumericsError("smooth_l1: weights shape mismatch")
        total = float(weights.sum())
        if total <= 0.0:
            raise NumericsError("smooth_l1: all-zero weights")
        loss = float((elem * weights).sum() / total)
        grad = gelem * weights / total
    return loss, grad


def cross_entropy(logits: Array, labels: Array) -> tuple[float, Array]:
    """Mean over rows of -log softmax(logits)[label].

    logits (..., V), labels (...) integer. Gradient is (softmax - onehot) / rows.
    """
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:-1]:
        raise NumericsError(
            f"cross_entropy: labels shape {labels.shape} does not match "
            f"logit rows {logits.shape[:-1]}"
        )
    v = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= v):
        raise NumericsError(f"cross_entropy: label out of range [0, {v})")
    z = logits - logits.max(axis=-1, keepdims=True)
    logq = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logq, labels[..., None], axis=-1)[..., 0]
    rows = max(labels.size, 1)
    loss = float(-picked.sum() / rows)
    grad = softmax(logits)
    np.subtract.at(
        grad.reshape(-1, v), (np.arange(labels.size), labels.reshape(-1)), 1.0
    )
    return loss, grad / rows
