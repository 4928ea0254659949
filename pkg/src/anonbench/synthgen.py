"""Seeded synthetic data generators used as desk-scale evaluation oracles.

gen_two_cov draws speaker means from an isotropic Gaussian (optionally
with per-dimension within-speaker scale multipliers) and utterances
around them, mirroring the generative model that PLDA assumes. A fixed
per-gender offset of +/-2 on the first coordinate makes gender-split
experiments meaningful without trivializing them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingRecord, EmbeddingSet, F0Track, Gender


@dataclass
class TwoCovSpec:
    dim: int
    n_speakers: int
    utts_per_speaker: int
    sigma_between: float = 1.0
    sigma_within: float = 0.3
    gender_fraction_female: float = 0.5
    seed: int = 0
    # per-dimension within-speaker std multipliers; None = spherical
    sigma_within_scale: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1 or self.n_speakers < 1 or self.utts_per_speaker < 1:
            raise ValueError("dim, n_speakers and utts_per_speaker must be positive")
        if self.sigma_between <= 0 or self.sigma_within <= 0:
            raise ValueError("sigma_between and sigma_within must be positive")
        if not 0.0 <= self.gender_fraction_female <= 1.0:
            raise ValueError("gender_fraction_female must be in [0, 1]")
        if self.sigma_within_scale is not None:
            scale = np.asarray(self.sigma_within_scale, dtype=float)
            if scale.shape != (self.dim,) or np.any(scale <= 0):
                raise ValueError("sigma_within_scale must be positive with length dim")
            self.sigma_within_scale = scale


GENDER_OFFSET = 2.0  # +2*e1 for female speakers, -2*e1 for male


def gen_two_cov(spec: TwoCovSpec) -> EmbeddingSet:
    rng = np.random.default_rng(spec.seed)
    n_female = int(round(spec.n_speakers * spec.gender_fraction_female))
    within_scale = (
        spec.sigma_within_scale
        if spec.sigma_within_scale is not None
        else np.ones(spec.dim)
    )
    records = []
    for i in range(spec.n_speakers):
        gender = Gender.FEMALE if i < n_female else Gender.MALE
        offset = GENDER_OFFSET if gender is Gender.FEMALE else -GENDER_OFFSET
        mean = rng.normal(0.0, spec.sigma_between, spec.dim)
        mean[0] += offset
        spk = f"spk{i:05d}"
        for j in range(spec.utts_per_speaker):
            vec = mean + rng.normal(0.0, spec.sigma_within, spec.dim) * within_scale
            records.append(EmbeddingRecord(f"{spk}_u{j:04d}", spk, gender, vec))
    return EmbeddingSet(records)


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthogonal matrix via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def gen_rotated_pair(
    a: EmbeddingSet, noise_sigma: float = 0.0, shuffle: bool = False, seed: int = 0
) -> tuple[EmbeddingSet, np.ndarray, dict[str, str]]:
    """Rotate (and optionally permute/noise) a set, returning ground truth.

    Returns (b, rotation, permutation) where permutation maps each utt_id
    of `a` to the utt_id of `b` holding its transformed vector. Records in
    `b` keep the speaker/gender labels of their source record.
    """
    if len(a) == 0:
        raise ValueError("input set is empty")
    rng = np.random.default_rng(seed)
    rot = random_orthogonal(a.dim, rng)
    x = a.matrix() @ rot
    if noise_sigma > 0:
        x = x + rng.normal(0.0, noise_sigma, x.shape)
    order = np.arange(len(a))
    if shuffle:
        order = rng.permutation(len(a))
    records = []
    permutation: dict[str, str] = {}
    for out_pos, src_idx in enumerate(order):
        src = a.records[src_idx]
        out_id = f"anon{out_pos:06d}"
        permutation[src.utt_id] = out_id
        records.append(EmbeddingRecord(out_id, src.spk_id, src.gender, x[src_idx]))
    return EmbeddingSet(records), rot, permutation


def gen_f0(
    n_frames: int,
    voiced_prob: float = 0.9,
    base_hz: float = 120.0,
    seed: int = 0,
    utt_id: str = "synth",
) -> F0Track:
    """Bounded log-domain random walk around ln(base_hz); unvoiced frames 0."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not 0.0 <= voiced_prob <= 1.0:
        raise ValueError("voiced_prob must be in [0, 1]")
    if base_hz <= 0:
        raise ValueError("base_hz must be positive")
    rng = np.random.default_rng(seed)
    voiced = rng.random(n_frames) < voiced_prob
    bound = 0.5
    walk = np.empty(n_frames)
    pos = 0.0
    for t in range(n_frames):
        pos += rng.normal(0.0, 0.02)
        # reflect at +/- bound
        if pos > bound:
            pos = 2 * bound - pos
        elif pos < -bound:
            pos = -2 * bound - pos
        walk[t] = pos
    f0 = np.where(voiced, base_hz * np.exp(walk), 0.0)
    return F0Track(utt_id, f0)
