"""Privacy metrics over genuine/impostor score distributions.

EER follows the convention "higher score = more genuine": FAR(t) is the
fraction of impostor scores >= t and FRR(t) the fraction of genuine
scores < t. Linkability is the histogram-binned global measure
D_sys = sum_bins p(s|H) * max(0, 2*omega*lr / (1 + omega*lr) - 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import ScoreSet, Trial, TrialLabel


@dataclass
class ScoreSplit:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=float)
        self.impostor = np.asarray(self.impostor, dtype=float)
        for name, arr in (("genuine", self.genuine), ("impostor", self.impostor)):
            if arr.ndim != 1:
                raise ValueError(f"{name} scores must be a flat sequence")
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} scores contain non-finite values")


def split_scores(scores: ScoreSet, trials: list[Trial]) -> ScoreSplit:
    """Partition trial scores into genuine and impostor lists."""
    lookup = scores.as_dict()
    genuine, impostor = [], []
    for t in trials:
        key = (t.enroll_id, t.test_id)
        if key not in lookup:
            raise KeyError(f"trial {key} has no score")
        (genuine if t.label is TrialLabel.GENUINE else impostor).append(lookup[key])
    return ScoreSplit(np.array(genuine), np.array(impostor))


def compute_eer(split: ScoreSplit) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Scans sorted unique scores and linearly interpolates between the
    adjacent thresholds where FAR - FRR changes sign. All scores tied
    returns 0.5 by convention (the generic interpolation yields it).
    """
    gen, imp = split.genuine, split.impostor
    if gen.size == 0 or imp.size == 0:
        raise ValueError("both genuine and impostor scores are required")
    thresholds = np.unique(np.concatenate([gen, imp]))
    # sentinel above the maximum so FAR=0 / FRR=1 is always reachable
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)
    far = np.array([np.mean(imp >= t) for t in thresholds])
    frr = np.array([np.mean(gen < t) for t in thresholds])
    diff = far - frr
    for i in range(len(thresholds)):
        if diff[i] == 0.0:
            return float(far[i]), float(thresholds[i])
        if diff[i] < 0.0:
            # crossing between i-1 and i (diff starts at FAR(min) - 0 >= 0)
            if i == 0:
                return float(far[0]), float(thresholds[0])
            d1, d2 = diff[i - 1], diff[i]
            alpha = d1 / (d1 - d2)
            eer = far[i - 1] + alpha * (far[i] - far[i - 1])
            thr = thresholds[i - 1] + alpha * (thresholds[i] - thresholds[i - 1])
            return float(eer), float(thr)
    # diff stayed positive everywhere: cannot happen with the sentinel
    raise AssertionError("EER scan found no crossing")


def eer_bootstrap_ci(
    split: ScoreSplit,
    n_boot: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for the EER."""
    if n_boot < 100:
        raise ValueError("n_boot must be >= 100")
    gen, imp = split.genuine, split.impostor
    if gen.size == 0 or imp.size == 0:
        raise ValueError("degenerate split: both classes must be non-empty")
    rng = np.random.default_rng(seed)
    eers = np.empty(n_boot)
    for i in range(n_boot):
        g = rng.choice(gen, size=gen.size, replace=True)
        m = rng.choice(imp, size=imp.size, replace=True)
        eers[i] = compute_eer(ScoreSplit(g, m))[0]
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(eers, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass
class LinkabilityResult:
    d_sys: float
    bin_edges: np.ndarray = field(repr=False)
    local_d: np.ndarray = field(repr=False)


def linkability(split: ScoreSplit, n_bins: int = 100, omega: float = 1.0) -> LinkabilityResult:
    """Global linkability D_sys over shared-edge score histograms."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if omega <= 0:
        raise ValueError("omega must be positive")
    gen, imp = split.genuine, split.impostor
    if gen.size == 0 or imp.size == 0:
        raise ValueError("both genuine and impostor scores are required")
    pooled = np.concatenate([gen, imp])
    lo, hi = pooled.min(), pooled.max()
    if lo == hi:
        warnings.warn("all scores identical; linkability degenerate, returning 0.0")
        edges = np.array([lo, hi])
        return LinkabilityResult(0.0, edges, np.zeros(1))
    edges = np.linspace(lo, hi, n_bins + 1)
    p_gen = np.histogram(gen, bins=edges)[0] / gen.size
    p_imp = np.histogram(imp, bins=edges)[0] / imp.size
    local_d = np.zeros(n_bins)
    for i in range(n_bins):
        if p_gen[i] == 0.0:
            local_d[i] = 0.0  # 0/0 convention; no genuine mass contributes
        elif p_imp[i] == 0.0:
            local_d[i] = 1.0  # lr = infinity
        else:
            lr = p_gen[i] / p_imp[i]
            local_d[i] = max(0.0, (2.0 * omega * lr) / (1.0 + omega * lr) - 1.0)
    d_sys = float(np.dot(p_gen, local_d))
    return LinkabilityResult(d_sys, edges, local_d)
