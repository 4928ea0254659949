"""Target-speaker selection strategies for voice-conversion anonymization.

Every strategy returns a TargetAssignment mapping each input utterance to
a target vector. At speaker level one target is drawn per input speaker
and reused for all of that speaker's utterances; at utterance level the
draw is independent per utterance. Randomized strategies split a
per-utterance RNG off the master seed so results do not depend on
processing order or worker count.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import EmbeddingRecord, EmbeddingSet, Gender
from .metrics import ScoreSplit, compute_eer
from .scoring import cosine_score, length_normalize


class Level(str, Enum):
    UTTERANCE = "utterance"
    SPEAKER = "speaker"


class ConvergenceError(RuntimeError):
    """Affinity propagation failed to converge; carries partial labels."""

    def __init__(self, message: str, labels: np.ndarray):
        super().__init__(message)
        self.labels = labels


@dataclass
class TargetAssignment:
    targets: dict[str, np.ndarray]
    level: Level
    strategy_name: str

    def to_embedding_set(self, inputs: EmbeddingSet) -> EmbeddingSet:
        """Assignment as an embedding set keyed by input utt_id."""
        records = []
        for rec in inputs.records:
            records.append(
                EmbeddingRecord(rec.utt_id, rec.spk_id, rec.gender, self.targets[rec.utt_id])
            )
        return EmbeddingSet(records)


def _unit_rng(seed: int, unit_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(unit_id.encode(), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])


def speaker_means(pool: EmbeddingSet) -> tuple[list[str], np.ndarray]:
    groups = pool.by_speaker()
    ids = list(groups)
    means = np.stack([np.mean([r.vec for r in g], axis=0) for g in groups.values()])
    return ids, means


def _units(inputs: EmbeddingSet, level: Level) -> list[tuple[str, np.ndarray, list[str]]]:
    """(unit_id, representative vector, covered utt_ids) per selection unit."""
    if level is Level.UTTERANCE:
        return [(r.utt_id, r.vec, [r.utt_id]) for r in inputs.records]
    out = []
    for spk, recs in inputs.by_speaker().items():
        mean = np.mean([r.vec for r in recs], axis=0)
        out.append((spk, mean, [r.utt_id for r in recs]))
    return out


def _assemble(
    units, unit_targets, level: Level, name: str
) -> TargetAssignment:
    targets: dict[str, np.ndarray] = {}
    for (unit_id, _, utt_ids), tgt in zip(units, unit_targets):
        for u in utt_ids:
            targets[u] = tgt
    return TargetAssignment(targets, level, name)


def select_constant(
    pool: EmbeddingSet, target_id: str, inputs: EmbeddingSet, level: Level = Level.UTTERANCE
) -> TargetAssignment:
    """Assign one fixed pool identity to every input utterance."""
    by_spk = pool.by_speaker()
    if target_id in by_spk:
        target = np.mean([r.vec for r in by_spk[target_id]], axis=0)
    else:
        try:
            target = pool.get(target_id).vec
        except KeyError:
            raise ValueError(f"unknown pool id {target_id!r}") from None
    targets = {r.utt_id: target for r in inputs.records}
    return TargetAssignment(targets, level, "constant")


def select_random_speaker(
    pool: EmbeddingSet,
    inputs: EmbeddingSet,
    level: Level = Level.UTTERANCE,
    seed: int = 0,
) -> TargetAssignment:
    if len(pool) == 0:
        raise ValueError("empty pool")
    _, means = speaker_means(pool)
    units = _units(inputs, level)
    unit_targets = [
        means[_unit_rng(seed, uid).integers(len(means))] for uid, _, _ in units
    ]
    return _assemble(units, unit_targets, level, "random-speaker")


def select_random_vector(
    pool: EmbeddingSet,
    inputs: EmbeddingSet,
    level: Level = Level.UTTERANCE,
    seed: int = 0,
) -> TargetAssignment:
    """Draw targets from a diagonal Gaussian fitted to the pool vectors."""
    if len(pool) < 2:
        raise ValueError("need at least 2 pool records to fit a Gaussian")
    x = pool.matrix()
    mu = x.mean(axis=0)
    sigma = x.std(axis=0, ddof=1)
    if np.any(sigma == 0):
        raise ValueError("pool has zero variance in some dimension")
    units = _units(inputs, level)
    unit_targets = [
        mu + sigma * _unit_rng(seed, uid).normal(size=mu.shape) for uid, _, _ in units
    ]
    return _assemble(units, unit_targets, level, "random-vector")


def select_farther(
    pool: EmbeddingSet,
    inputs: EmbeddingSet,
    n_far: int = 200,
    n_rand: int = 100,
    scorer=None,
    level: Level = Level.UTTERANCE,
    seed: int = 0,
) -> TargetAssignment:
    """Average a random n_rand of the n_far least-similar pool speakers.

    scorer(a, b) must return higher values for more similar vectors;
    defaults to cosine similarity.
    """
    ids, means = speaker_means(pool)
    if not len(means) >= n_far >= n_rand >= 1:
        raise ValueError(
            f"need pool speakers >= n_far >= n_rand >= 1, got "
            f"{len(means)}, {n_far}, {n_rand}"
        )
    units = _units(inputs, level)
    if scorer is None:
        unit_mat = np.stack([vec for _, vec, _ in units])
        sims = length_normalize(unit_mat) @ length_normalize(means).T
    else:
        sims = np.array(
            [[scorer(vec, m) for m in means] for _, vec, _ in units]
        )
    unit_targets = []
    for (uid, _, _), row in zip(units, sims):
        candidates = np.argsort(row, kind="stable")[:n_far]
        rng = _unit_rng(seed, uid)
        chosen = rng.choice(candidates, size=n_rand, replace=False)
        unit_targets.append(means[chosen].mean(axis=0))
    return _assemble(units, unit_targets, level, "farther")


def select_dense(
    pool: EmbeddingSet,
    inputs: EmbeddingSet,
    top_k_clusters: int = 10,
    exclude_nearest: bool = True,
    level: Level = Level.UTTERANCE,
    seed: int = 0,
    damping: float = 0.9,
    max_iters: int = 2000,
) -> TargetAssignment:
    """Cluster the pool, draw a large cluster, average half its members."""
    ids, means = speaker_means(pool)
    dists = np.sum((means[:, None, :] - means[None, :, :]) ** 2, axis=-1)
    labels, exemplars = affinity_propagation(-dists, damping=damping, max_iters=max_iters)
    sizes = np.array([(labels == e).sum() for e in exemplars])
    order = np.argsort(sizes, kind="stable")[::-1]
    top = [exemplars[i] for i in order[: min(top_k_clusters, len(exemplars))]]

    units = _units(inputs, level)
    unit_targets = []
    for uid, vec, _ in units:
        candidates = list(top)
        if exclude_nearest and len(candidates) > 1:
            exdist = [np.sum((means[e] - vec) ** 2) for e in candidates]
            candidates.pop(int(np.argmin(exdist)))
        rng = _unit_rng(seed, uid)
        cluster = candidates[rng.integers(len(candidates))]
        members = np.flatnonzero(labels == cluster)
        n_half = math.ceil(len(members) / 2)
        chosen = rng.choice(members, size=n_half, replace=False)
        unit_targets.append(means[chosen].mean(axis=0))
    return _assemble(units, unit_targets, level, "dense")


def kmeans_targets(
    pool: EmbeddingSet, k_per_gender: int = 20, seed: int = 0
) -> list[str]:
    """Per gender, k-means the speaker means and return nearest speakers."""
    groups = pool.by_speaker()
    gender_of = {spk: recs[0].gender for spk, recs in groups.items()}
    if any(g is Gender.UNKNOWN for g in gender_of.values()):
        raise ValueError("kmeans_targets requires gender labels for all pool speakers")
    ids, means = speaker_means(pool)
    selected = []
    rng = np.random.default_rng(seed)
    for gender in (Gender.FEMALE, Gender.MALE):
        idx = [i for i, spk in enumerate(ids) if gender_of[spk] is gender]
        if not idx:
            continue
        if len(idx) < k_per_gender:
            raise ValueError(
                f"only {len(idx)} {gender.value} speakers for k={k_per_gender}"
            )
        x = means[idx]
        centroids = lloyd_kmeans(x, k_per_gender, rng)
        for c in centroids:
            nearest = int(np.argmin(np.sum((x - c) ** 2, axis=1)))
            selected.append(ids[idx[nearest]])
    return selected


def lloyd_kmeans(
    x: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 300
) -> np.ndarray:
    """Lloyd iterations from a k-means++ initialization."""
    n = x.shape[0]
    if n < k:
        raise ValueError(f"fewer points ({n}) than clusters ({k})")
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centroids[i] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((x - centroids[i]) ** 2, axis=1))
    labels = None
    for _ in range(max_iters):
        dist = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=-1)
        new_labels = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids


def affinity_propagation(
    similarity: np.ndarray,
    damping: float = 0.9,
    max_iters: int = 2000,
    stable_iters: int = 15,
) -> tuple[np.ndarray, list[int]]:
    """Responsibility/availability message passing.

    preference (self-similarity) is set to the median off-diagonal
    similarity. Converged once the exemplar set is unchanged for
    `stable_iters` consecutive iterations.

    Returns (labels, exemplars) where labels[i] is the exemplar index of
    point i and exemplars lists the distinct exemplar indices.
    """
    s = np.array(similarity, dtype=float)
    n = s.shape[0]
    if s.shape != (n, n):
        raise ValueError("similarity must be square")
    if np.max(np.abs(s - s.T)) > 1e-9:
        raise ValueError("similarity must be symmetric")
    if not 0.5 <= damping < 1.0:
        raise ValueError("damping must be in [0.5, 1)")
    off_diag = s[~np.eye(n, dtype=bool)]
    median = float(np.median(off_diag)) if n > 1 else 0.0
    # nudge the preference slightly below the median so fully degenerate
    # inputs (all similarities equal) collapse to a single cluster
    preference = median - 1e-6 * (1.0 + abs(median))
    np.fill_diagonal(s, preference)
    # tiny deterministic jitter removes degeneracies from tied similarities
    jitter_rng = np.random.default_rng(0)
    s = s + 1e-12 * (np.abs(preference) + 1.0) * jitter_rng.random((n, n))
    burn_in = 200  # damped messages need this long to leave the transient

    r = np.zeros((n, n))
    a = np.zeros((n, n))
    prev_exemplars: frozenset[int] | None = None
    stable = 0
    idx = np.arange(n)
    for it in range(max_iters):
        # responsibilities
        as_ = a + s
        first = np.argmax(as_, axis=1)
        max1 = as_[idx, first]
        as_[idx, first] = -np.inf
        max2 = np.max(as_, axis=1)
        new_r = s - max1[:, None]
        new_r[idx, first] = s[idx, first] - max2
        r = damping * r + (1 - damping) * new_r
        # availabilities
        rp = np.maximum(r, 0)
        np.fill_diagonal(rp, np.diag(r))
        col = rp.sum(axis=0)
        new_a = np.minimum(0, col[None, :] - rp)
        new_a[idx, idx] = col - np.diag(rp)
        a = damping * a + (1 - damping) * new_a

        exemplars = frozenset(np.flatnonzero(np.diag(a + r) > 0).tolist())
        # stability of the exemplar set alone can trigger during the damped
        # transient, hence the burn-in before the stability window counts
        if exemplars and exemplars == prev_exemplars and it >= burn_in:
            stable += 1
            if stable >= stable_iters:
                break
        else:
            stable = 0
        prev_exemplars = exemplars
    else:
        labels = _ap_labels(s, a, r)
        raise ConvergenceError(
            f"affinity propagation did not converge in {max_iters} iterations",
            labels,
        )
    labels = _ap_labels(s, a, r)
    return labels, sorted(set(labels.tolist()))


def _ap_labels(s: np.ndarray, a: np.ndarray, r: np.ndarray) -> np.ndarray:
    n = s.shape[0]
    exemplars = np.flatnonzero(np.diag(a + r) > 0)
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(np.diag(a + r)))])
    labels = exemplars[np.argmax(s[:, exemplars], axis=1)]
    labels[exemplars] = exemplars
    return labels


def target_level_split(
    assignment: TargetAssignment, inputs: EmbeddingSet
) -> ScoreSplit:
    """Genuine/impostor cosine scores computed directly on target vectors.

    Each input speaker's utterances are split in half: the first half's
    targets are averaged into an enrollment vector, the second half's
    targets are scored against every enrollment. No synthesis involved.
    """
    enroll: dict[str, np.ndarray] = {}
    tests: list[tuple[str, np.ndarray]] = []
    for spk, recs in inputs.by_speaker().items():
        half = max(1, len(recs) // 2)
        enroll_part, test_part = recs[:half], recs[half:] or recs[:half]
        enroll[spk] = np.mean([assignment.targets[r.utt_id] for r in enroll_part], axis=0)
        tests.extend((spk, assignment.targets[r.utt_id]) for r in test_part)
    genuine, impostor = [], []
    for e_spk, e_vec in enroll.items():
        for t_spk, t_vec in tests:
            score = cosine_score(e_vec, t_vec)
            (genuine if e_spk == t_spk else impostor).append(score)
    return ScoreSplit(np.array(genuine), np.array(impostor))


def target_level_eer(assignment: TargetAssignment, inputs: EmbeddingSet) -> float:
    return compute_eer(target_level_split(assignment, inputs))[0]
