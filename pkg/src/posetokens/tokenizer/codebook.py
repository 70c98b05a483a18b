"""Shared codebook: nearest-neighbor lookup and EMA entry updates.

Entries are stored as (groups, size, dim). The standard configuration uses a
single group shared by every token position; the per-joint ablation uses one
group per position so that tokens cannot share prototypes. Entries are never
updated by gradients, only by ``ema_update``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Array


@dataclass
class Codebook:
    entries: Array    # (G, V, N)
    ema_size: Array   # (G, V)  EMA of per-batch assignment counts
    ema_sum: Array    # (G, V, N) EMA of per-batch assigned-feature sums
    decay: float
    eps: float

    @property
    def groups(self) -> int:
        return self.entries.shape[0]

    @property
    def size(self) -> int:
        return self.entries.shape[1]

    @property
    def dim(self) -> int:
        return self.entries.shape[2]

    @property
    def matrix(self) -> Array:
        """The (V, N) entry matrix of a shared (single-group) codebook."""
        if self.groups != 1:
            raise ValueError("matrix is only defined for a shared codebook")
        return self.entries[0]

    def tensors(self, prefix: str = "codebook") -> dict[str, Array]:
        return {f"{prefix}.entries": self.entries,
                f"{prefix}.ema_size": self.ema_size,
                f"{prefix}.ema_sum": self.ema_sum}


def init_codebook(rng: np.random.Generator, groups: int, size: int, dim: int,
                  decay: float = 0.99, eps: float = 1e-5,
                  init_std: float = 1.0) -> Codebook:
    entries = rng.normal(0.0, init_std, size=(groups, size, dim))
    return Codebook(entries=entries,
                    ema_size=np.ones((groups, size)),
                    ema_sum=entries.copy(),
                    decay=decay, eps=eps)


def seed_codebook_from_features(codebook: Codebook, feats: Array,
                                rng: np.random.Generator,
                                jitter: float = 1e-4) -> None:
    """Reset entries to randomly drawn token features (plus tiny jitter).

    ``feats`` has shape (B, M, N). The shared codebook samples from all
    positions; grouped codebooks sample per position. Starting entries on the
    data manifold avoids the long dead-entry phase of a cold normal init.
    """
    g, v, n = codebook.entries.shape
    if codebook.groups == 1:
        pool = feats.reshape(-1, n)
        picks = rng.integers(0, pool.shape[0], size=v)
        codebook.entries[0] = pool[picks]
    else:
        for gi in range(g):
            pool = feats[:, gi, :]
            picks = rng.integers(0, pool.shape[0], size=v)
            codebook.entries[gi] = pool[picks]
    codebook.entries += rng.normal(0.0, jitter, size=codebook.entries.shape)
    codebook.ema_size[...] = 1.0
    codebook.ema_sum[...] = codebook.entries


def quantize(codebook: Codebook, feats: Array) -> tuple[Array, Array]:
    """Nearest entry per token in L2; ties break toward the lower index.

    feats (..., M, N) -> (indices (..., M) int64, quantized (..., M, N)).
    For a grouped codebook, token position i is matched against group i only.
    """
    m = feats.shape[-2]
    if codebook.groups not in (1, m):
        raise ValueError(
            f"quantize: {m} token positions vs {codebook.groups} codebook groups"
        )
    lead = feats.shape[:-2]
    flat = feats.reshape(-1, m, feats.shape[-1])
    indices = np.empty(flat.shape[:2], dtype=np.int64)
    # chunk the batch so the (chunk, M, V, N) difference tensor stays cache-sized
    row_bytes = 8 * m * codebook.size * codebook.dim
    chunk = max(1, (4 << 20) // row_bytes)
    for start in range(0, flat.shape[0], chunk):
        diff = flat[start:start + chunk, :, None, :] - codebook.entries
        np.multiply(diff, diff, out=diff)
        dist = diff.sum(axis=-1)
        indices[start:start + chunk] = np.argmin(dist, axis=-1)
    indices = indices.reshape(lead + (m,))
    quantized = lookup(codebook, indices)
    return indices, quantized


def lookup(codebook: Codebook, indices: Array) -> Array:
    """Entry vectors for integer indices of shape (..., M)."""
    indices = np.asarray(indices)
    m = indices.shape[-1]
    if np.any(indices < 0) or np.any(indices >= codebook.size):
        raise ValueError(
            f"token index out of range [0, {codebook.size})"
        )
    if codebook.groups == 1:
        return codebook.entries[0][indices]
    positions = np.arange(m)
    return codebook.entries[positions, indices, :]


def ema_update(codebook: Codebook, feats: Array, indices: Array) -> None:
    """Moving-average update from one batch of token features.

        size <- decay * size + (1 - decay) * count
        sum  <- decay * sum  + (1 - decay) * assigned-feature sum
        entry <- sum / (size + eps)
    """
    g, v, n = codebook.entries.shape
    feats2 = feats.reshape(-1, feats.shape[-2], n)
    idx2 = indices.reshape(-1, indices.shape[-1])
    counts = np.zeros((g, v))
    sums = np.zeros((g, v, n))
    if g == 1:
        flat_idx = idx2.reshape(-1)
        flat_feats = feats2.reshape(-1, n)
        counts[0] = np.bincount(flat_idx, minlength=v)
        np.add.at(sums[0], flat_idx, flat_feats)
    else:
        for gi in range(g):
            counts[gi] = np.bincount(idx2[:, gi], minlength=v)
            np.add.at(sums[gi], idx2[:, gi], feats2[:, gi, :])
    codebook.ema_size *= codebook.decay
    codebook.ema_size += (1.0 - codebook.decay) * counts
    codebook.ema_sum *= codebook.decay
    codebook.ema_sum += (1.0 - codebook.decay) * sums
    codebook.entries[...] = codebook.ema_sum / (
        codebook.ema_size[..., None] + codebook.eps
    )


def usage_counts(codebook: Codebook, indices: Array) -> Array:
    """Histogram of assignments over all (group, entry) slots, flattened."""
    g, v = codebook.groups, codebook.size
    idx2 = np.asarray(indices).reshape(-1, indices.shape[-1])
    counts = np.zeros((g, v), dtype=np.int64)
    if g == 1:
        counts[0] = np.bincount(idx2.reshape(-1), minlength=v)
    else:
        for gi in range(g):
            counts[gi] = np.bincount(idx2[:, gi], minlength=v)
    return counts.reshape(-1)


def usage_perplexity(counts: Array) -> float:
    """exp(entropy) of the empirical assignment distribution; in [1, slots]."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("usage_perplexity: empty histogram")
    p = counts / total
    nz = p[p > 0]
    return float(np.exp(-(nz * np.log(nz)).sum()))
