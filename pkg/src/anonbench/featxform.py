"""Frame-sequence feature transforms: EMA vector quantization, Laplace
noise, and PCA.

The codebook is trained without any network in the loop: prototypes are
EMA-updated cluster means over mini-batches, which is the k-means-like
fixed point of the quantization objective. The quantization objective per
sequence (sum of squared frame-to-prototype distances) and its
regularizer counterpart are exposed as measured quantities.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FrameSequence:
    utt_id: str
    frames: np.ndarray  # (J, D)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"frames of {self.utt_id!r} must be a non-empty (J, D) array")
        if not np.all(np.isfinite(frames)):
            raise ValueError(f"non-finite frame values in {self.utt_id!r}")
        self.frames = frames


@dataclass
class Codebook:
    prototypes: np.ndarray  # (S, D)
    ema_counts: np.ndarray = field(default=None)
    gamma: float = 0.99
    laplace_eps_smoothing: float = 1e-5

    def __post_init__(self):
        self.prototypes = np.asarray(self.prototypes, dtype=float)
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 1:
            raise ValueError("prototypes must be a non-empty (S, D) array")
        if not np.all(np.isfinite(self.prototypes)):
            raise ValueError("non-finite prototype values")
        if self.ema_counts is None:
            self.ema_counts = np.zeros(self.prototypes.shape[0])
        self.ema_counts = np.asarray(self.ema_counts, dtype=float)
        if np.any(self.ema_counts < 0):
            raise ValueError("ema_counts must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")

    @property
    def size(self) -> int:
        return self.prototypes.shape[0]


def _nearest(prototypes: np.ndarray, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(indices, squared distances) of each frame's nearest prototype."""
    d2 = (
        np.sum(frames**2, axis=1)[:, None]
        - 2.0 * frames @ prototypes.T
        + np.sum(prototypes**2, axis=1)[None, :]
    )
    idx = np.argmin(d2, axis=1)  # argmin ties resolve to lowest index
    # recompute exactly to avoid cancellation in the expanded form
    sq = np.sum((frames - prototypes[idx]) ** 2, axis=1)
    return idx, sq


def vq_apply(codebook: Codebook, seq: FrameSequence) -> tuple[FrameSequence, np.ndarray, float]:
    """Replace each frame by its nearest prototype.

    Returns (quantized sequence, prototype indices, mean squared distortion).
    """
    if seq.frames.shape[1] != codebook.prototypes.shape[1]:
        raise ValueError(
            f"dimension mismatch: frames D={seq.frames.shape[1]}, "
            f"codebook D={codebook.prototypes.shape[1]}"
        )
    idx, sq = _nearest(codebook.prototypes, seq.frames)
    quantized = FrameSequence(seq.utt_id, codebook.prototypes[idx].copy())
    return quantized, idx, float(sq.mean())


def vq_regularizer(seq: FrameSequence, quantized: FrameSequence) -> float:
    """Sum of squared distances from frames to their assigned prototypes."""
    if seq.frames.shape != quantized.frames.shape:
        raise ValueError("shape mismatch between sequence and quantized sequence")
    return float(np.sum((seq.frames - quantized.frames) ** 2))


def vq_train(
    sequences: list[FrameSequence],
    size: int,
    gamma: float = 0.99,
    epochs: int = 20,
    seed: int = 0,
    batch_size: int = 1024,
    smoothing: float = 1e-5,
    dead_threshold: float = 1e-3,
) -> Codebook:
    """EMA codebook training over shuffled mini-batches.

    Prototypes start from `size` distinct random frames. Each batch
    updates EMA cluster sums/counts with decay gamma; counts are Laplace
    smoothed before dividing. Prototypes whose EMA count drops below
    dead_threshold at an epoch boundary are re-seeded from random frames.
    """
    all_frames = np.concatenate([s.frames for s in sequences], axis=0)
    n = all_frames.shape[0]
    if n < size:
        raise ValueError(f"{n} frames cannot seed a codebook of size {size}")
    rng = np.random.default_rng(seed)
    init_idx = rng.choice(n, size=size, replace=False)
    prototypes = all_frames[init_idx].copy()
    ema_counts = np.ones(size)
    ema_sums = prototypes.copy()

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = all_frames[order[start : start + batch_size]]
            idx, _ = _nearest(prototypes, batch)
            counts = np.bincount(idx, minlength=size).astype(float)
            sums = np.zeros_like(prototypes)
            np.add.at(sums, idx, batch)
            ema_counts = gamma * ema_counts + (1 - gamma) * counts
            ema_sums = gamma * ema_sums + (1 - gamma) * sums
            total = ema_counts.sum()
            smoothed = (ema_counts + smoothing) / (total + size * smoothing) * total
            prototypes = ema_sums / smoothed[:, None]
        dead = np.flatnonzero(ema_counts < dead_threshold)
        if dead.size:
            reseed = all_frames[rng.choice(n, size=dead.size, replace=False)]
            prototypes[dead] = reseed
            ema_sums[dead] = reseed
            ema_counts[dead] = 1.0
    return Codebook(prototypes, ema_counts, gamma, smoothing)


def laplace_noise(
    seq: FrameSequence,
    epsilon: float,
    mode: str = "per_frame",
    normalize: bool = False,
    seed: int = 0,
) -> FrameSequence:
    """Add Laplace(0, 1/epsilon) noise to each coordinate.

    mode "per_utterance" draws one noise vector and reuses it across all
    frames; "per_frame" draws independently per frame. With normalize,
    each frame is length-normalized both before noising and after.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if mode not in ("per_frame", "per_utterance"):
        raise ValueError(f"unknown mode {mode!r}")
    frames = seq.frames
    if normalize:
        frames = _norm_rows(frames)
    rng = _utt_rng(seed, seq.utt_id)
    scale = 1.0 / epsilon
    if mode == "per_utterance":
        noise = rng.laplace(0.0, scale, frames.shape[1])[None, :]
    else:
        noise = rng.laplace(0.0, scale, frames.shape)
    out = frames + noise
    if normalize:
        out = _norm_rows(out)
    return FrameSequence(seq.utt_id, out)


def _norm_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot length-normalize a zero frame")
    return x / norms


def _utt_rng(seed: int, utt_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(utt_id.encode(), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d_out, D) orthonormal rows
    explained_variance_ratio: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.components = np.asarray(self.components, dtype=float)
        gram = self.components @ self.components.T
        if np.max(np.abs(gram - np.eye(gram.shape[0]))) > 1e-8:
            raise ValueError("PCA components are not orthonormal")
        if not 0.0 <= self.explained_variance_ratio <= 1.0 + 1e-12:
            raise ValueError("explained_variance_ratio must be in [0, 1]")


def pca_fit(vectors: np.ndarray, d_out: int) -> PcaModel:
    """Principal axes by descending variance, with a deterministic sign.

    Each component row's largest-magnitude entry is made positive so two
    fits of the same data agree exactly.
    """
    x = np.asarray(vectors, dtype=float)
    n, d = x.shape
    if d_out > min(n - 1, d):
        raise ValueError(f"d_out={d_out} exceeds min(N-1, D)={min(n - 1, d)}")
    if n <= d_out:
        raise ValueError("need more samples than output dimensions")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:d_out]
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    variances = svals**2
    ratio = float(variances[:d_out].sum() / variances.sum())
    return PcaModel(mean, components, ratio)


def pca_apply(model: PcaModel, vectors: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, dtype=float))
    if x.shape[1] != model.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: vectors D={x.shape[1]}, model D={model.mean.shape[0]}"
        )
    out = (x - model.mean) @ model.components.T
    return out if np.asarray(vectors).ndim > 1 else out[0]
