"""F0-trajectory anonymizing transforms.

All statistics and transforms operate on natural-log F0 over voiced
frames; unvoiced frames (value 0) are never touched. Quantization uses
round(2^(B-1) * (f - f_min) / (f_max - f_min)) with the 2^(B-1) factor
as printed, so B bits yield at most 2^(B-1) + 1 levels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import F0Track


@dataclass(frozen=True)
class F0Stats:
    mu: float  # mean of natural-log F0 over voiced frames
    sigma: float  # std of natural-log F0 over voiced frames

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def _voiced_log(track: F0Track) -> tuple[np.ndarray, np.ndarray]:
    mask = track.voiced_mask
    return np.log(track.f0[mask]), mask


def f0_stats(track: F0Track) -> F0Stats:
    logf, mask = _voiced_log(track)
    if mask.sum() < 2:
        raise ValueError(f"track {track.utt_id!r} needs >= 2 voiced frames")
    return F0Stats(float(logf.mean()), float(logf.std()))


def f0_linear_shift(track: F0Track, target: F0Stats) -> F0Track:
    """Affine-map voiced log-F0 to the target mean/std."""
    src = f0_stats(track)
    if src.sigma == 0:
        raise ValueError("degenerate source F0: zero variance")
    logf, mask = _voiced_log(track)
    shifted = target.mu + (target.sigma / src.sigma) * (logf - src.mu)
    out = track.f0.copy()
    out[mask] = np.exp(shifted)
    return F0Track(track.utt_id, out, track.frame_period)


def f0_awgn(track: F0Track, power_db: float, seed: int = 0) -> F0Track:
    """Add white Gaussian noise of std sqrt(10^(D/10)) to voiced log-F0."""
    sigma = np.sqrt(10.0 ** (power_db / 10.0))
    rng = _track_rng(seed, track.utt_id)
    mask = track.voiced_mask
    out = track.f0.copy()
    out[mask] = np.exp(np.log(out[mask]) + rng.normal(0.0, sigma, int(mask.sum())))
    return F0Track(track.utt_id, out, track.frame_period)


def f0_quantize(track: F0Track, bits: int) -> tuple[F0Track, np.ndarray]:
    """Linear quantization of voiced log-F0 into 2^(B-1)+1 levels.

    Returns the dequantized Hz-domain track and the integer levels of the
    voiced frames.
    """
    if bits < 1:
        raise ValueError("bits must be a positive integer")
    logf, mask = _voiced_log(track)
    if mask.sum() < 2:
        raise ValueError(f"track {track.utt_id!r} needs >= 2 voiced frames")
    f_min, f_max = logf.min(), logf.max()
    if f_min == f_max:
        raise ValueError("degenerate track: f_max == f_min")
    n_levels = 2 ** (bits - 1)
    levels = np.round(n_levels * (logf - f_min) / (f_max - f_min)).astype(int)
    dequant = f_min + levels * (f_max - f_min) / n_levels
    out = track.f0.copy()
    out[mask] = np.exp(dequant)
    return F0Track(track.utt_id, out, track.frame_period), levels


def f0_chain(track: F0Track, transforms: list) -> F0Track:
    """Left-to-right composition of single-track transforms.

    Each element is a callable taking and returning an F0Track.
    """
    out = track
    for fn in transforms:
        out = fn(out)
    return out


def _track_rng(seed: int, utt_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(utt_id.encode(), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])


def parse_chain_spec(spec: str, seed: int = 0) -> list:
    """Parse "shift:statsfile;awgn:15;quant:4" into transform callables.

    shift takes either a stats file path (two lines "mu VALUE" /
    "sigma VALUE") or "MU,SIGMA" inline.
    """
    transforms = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        if ":" not in part:
            raise ValueError(f"bad chain element {part!r}, expected name:arg")
        name, arg = part.split(":", 1)
        if name == "shift":
            stats = _parse_stats_arg(arg)
            transforms.append(lambda t, s=stats: f0_linear_shift(t, s))
        elif name == "awgn":
            power = float(arg)
            transforms.append(lambda t, p=power: f0_awgn(t, p, seed=seed))
        elif name == "quant":
            bits = int(arg)
            transforms.append(lambda t, b=bits: f0_quantize(t, b)[0])
        else:
            raise ValueError(f"unknown F0 transform {name!r}")
    return transforms


def _parse_stats_arg(arg: str) -> F0Stats:
    if "," in arg:
        mu, sigma = arg.split(",")
        return F0Stats(float(mu), float(sigma))
    values = {}
    with open(arg) as fh:
        for line in fh:
            if line.strip():
                key, val = line.split()
                values[key] = float(val)
    return F0Stats(values["mu"], values["sigma"])
