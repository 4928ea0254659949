"""Rotation-based inversion attack on embedding-space anonymization.

Supervised mode estimates an orthogonal map between parallel clear and
anonymized sets by Procrustes analysis (SVD of A^T B). Unsupervised mode
alternates exact batch assignment (bipartite matching on squared
Euclidean cost) with blended Procrustes updates, re-projected onto the
orthogonal group. Anonymized vectors are inverted with the transposed
rotation and evaluated by nearest-neighbor speaker accuracy and
cosine-scored EER against the clear vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import EmbeddingSet, Gender, build_embedding_set
from .featxform import pca_apply, pca_fit
from .metrics import ScoreSplit, compute_eer
from .scoring import length_normalize


@dataclass
class Rotation:
    w: np.ndarray
    train_objective: float = float("nan")

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        d = self.w.shape[0]
        if self.w.shape != (d, d):
            raise ValueError("rotation must be square")
        if np.linalg.norm(self.w.T @ self.w - np.eye(d)) >= 1e-6:
            raise ValueError("matrix is not orthogonal within 1e-6")


@dataclass
class AlignmentConfig:
    batch_size: int = 256
    n_iters: int = 500
    lr_init: float = 0.5
    use_pca: bool = False
    pca_dims: int = 70
    gender_split: bool = False
    seed: int = 0
    init_permutation: np.ndarray | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


def procrustes(a: np.ndarray, b: np.ndarray) -> Rotation:
    """Orthogonal W minimizing ||A W - B||^2 for row-corresponded sets."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    n, d = a.shape
    if n < d:
        warnings.warn(f"only {n} correspondences for dimension {d}; rotation may overfit")
    u, _, vt = np.linalg.svd(a.T @ b)
    w = u @ vt
    objective = float(np.sum((a @ w - b) ** 2))
    return Rotation(w, objective)


def _project_orthogonal(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def wasserstein_procrustes(
    a: np.ndarray, b: np.ndarray, config: AlignmentConfig
) -> tuple[Rotation, np.ndarray]:
    """Alternating assignment / rotation estimation without correspondences.

    Returns the best-seen rotation (by full-data matched objective) and
    the full-data assignment under it: permutation[i] is the row of `b`
    matched to row i of `a`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    n, d = a.shape
    rng = np.random.default_rng(config.seed)
    batch = min(config.batch_size, n)

    if config.init_permutation is not None:
        w = procrustes(a, b[config.init_permutation]).w
    else:
        w = np.eye(d)

    def full_objective(w_cur: np.ndarray) -> tuple[float, np.ndarray]:
        cost = _sq_dists(a @ w_cur, b)
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(n, dtype=int)
        perm[rows] = cols
        return float(cost[rows, cols].sum()), perm

    best_obj, best_perm = full_objective(w)
    best_w = w.copy()

    for it in range(config.n_iters):
        # step size halves every quarter of the iteration budget
        eta = config.lr_init * 0.5 ** (4 * it // max(1, config.n_iters))
        if batch == n:
            ia = np.arange(n)
            ib = np.arange(n)
        else:
            ia = rng.choice(n, size=batch, replace=False)
            ib = rng.choice(n, size=batch, replace=False)
        sub_a, sub_b = a[ia], b[ib]
        cost = _sq_dists(sub_a @ w, sub_b)
        rows, cols = linear_sum_assignment(cost)
        w_batch = procrustes(sub_a[rows], sub_b[cols]).w
        w = _project_orthogonal((1.0 - eta) * w + eta * w_batch)
        obj, perm = full_objective(w)
        if obj < best_obj:
            best_obj, best_perm, best_w = obj, perm, w.copy()
    # full-data refinement: alternate exact assignment and Procrustes from
    # the best-seen state until the objective stops improving
    for _ in range(50):
        w_new = procrustes(a, b[best_perm]).w
        obj_new, perm_new = full_objective(w_new)
        if obj_new < best_obj - 1e-12:
            best_obj, best_perm, best_w = obj_new, perm_new, w_new
        else:
            break
    return Rotation(best_w, best_obj), best_perm


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(x**2, axis=1)[:, None]
        - 2.0 * x @ y.T
        + np.sum(y**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def invert(rotation: Rotation, anon_vectors: np.ndarray) -> np.ndarray:
    """Map anonymized vectors back through the transposed rotation."""
    x = np.atleast_2d(np.asarray(anon_vectors, dtype=float))
    if x.shape[1] != rotation.w.shape[0]:
        raise ValueError("dimension mismatch between vectors and rotation")
    out = x @ rotation.w.T
    return out if np.asarray(anon_vectors).ndim > 1 else out[0]


def top1_accuracy(inverted: EmbeddingSet, clear: EmbeddingSet) -> float:
    """Fraction of inverted vectors whose nearest clear vector shares the speaker."""
    if len(inverted) == 0 or len(clear) == 0:
        raise ValueError("both sets must be non-empty")
    inv = inverted.matrix()
    ref = clear.matrix()
    ref_spk = [r.spk_id for r in clear.records]
    d2 = _sq_dists(inv, ref)
    nearest = np.argmin(d2, axis=1)
    hits = sum(
        1
        for rec, j in zip(inverted.records, nearest)
        if rec.spk_id == ref_spk[j]
    )
    return hits / len(inverted)


@dataclass
class AttackReport:
    eer_by_gender: dict[str, float] = field(default_factory=dict)
    top1_by_gender: dict[str, float] = field(default_factory=dict)
    objective: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "eer_by_gender": dict(self.eer_by_gender),
            "top1_by_gender": dict(self.top1_by_gender),
            "objective": self.objective,
        }


def _gender_groups(emb: EmbeddingSet, split: bool) -> dict[str, EmbeddingSet]:
    if not split:
        return {"all": emb}
    groups: dict[str, list] = {}
    for r in emb.records:
        if r.gender is Gender.UNKNOWN:
            raise ValueError(f"utt {r.utt_id!r} lacks a gender label for gender_split")
        groups.setdefault(r.gender.value, []).append(r)
    return {g: EmbeddingSet(recs) for g, recs in groups.items()}


def _eval_eer(inverted: EmbeddingSet, clear: EmbeddingSet, normalize: bool) -> float:
    """Cosine EER of inverted test vectors against clear speaker enrollments."""
    enroll = {}
    for spk, recs in clear.by_speaker().items():
        v = np.mean([r.vec for r in recs], axis=0)
        enroll[spk] = length_normalize(v) if normalize else v
    genuine, impostor = [], []
    inv = inverted.matrix()
    if normalize:
        inv = length_normalize(inv)
    for spk, e in enroll.items():
        e_unit = e / np.linalg.norm(e)
        scores = inv @ e_unit / np.linalg.norm(inv, axis=1)
        for rec, s in zip(inverted.records, scores):
            (genuine if rec.spk_id == spk else impostor).append(float(s))
    return compute_eer(ScoreSplit(np.array(genuine), np.array(impostor)))[0]


def run_attack_scenario(
    clear_train: EmbeddingSet,
    anon_train: EmbeddingSet,
    clear_eval: EmbeddingSet,
    anon_eval: EmbeddingSet,
    config: AlignmentConfig,
    supervised: bool = True,
    normalize_scores: bool = True,
) -> AttackReport:
    """Full attack: optional PCA pre-alignment, per-gender rotations,
    inversion of the anonymized evaluation set, EER and top-1 metrics.

    Supervised mode requires clear_train and anon_train to be parallel
    (record i of one corresponds to record i of the other).
    """
    if supervised and len(clear_train) != len(anon_train):
        raise ValueError("supervised mode needs parallel train sets")

    def project(train_fit: np.ndarray, apply_to: list[np.ndarray]):
        if not config.use_pca:
            return apply_to
        model = pca_fit(train_fit, config.pca_dims)
        return [pca_apply(model, x) for x in apply_to]

    report = AttackReport()
    clear_groups = _gender_groups(clear_train, config.gender_split)
    anon_groups = _gender_groups(anon_train, config.gender_split)
    clear_eval_groups = _gender_groups(clear_eval, config.gender_split)
    anon_eval_groups = _gender_groups(anon_eval, config.gender_split)

    total_obj = 0.0
    for g in clear_groups:
        ct = clear_groups[g].matrix()
        at = anon_groups[g].matrix()
        ce_set = clear_eval_groups[g]
        ae_set = anon_eval_groups[g]
        # PCA fitted separately per set acts as a pre-alignment
        ct, ce = project(ct, [ct, ce_set.matrix()])
        at, ae = project(at, [at, ae_set.matrix()])
        # rotation maps the clear space onto the anonymized space; the
        # attack applies its transpose to anonymized vectors
        if supervised:
            rot = procrustes(ct, at)
        else:
            rot, _ = wasserstein_procrustes(ct, at, config)
        total_obj += rot.train_objective
        inv_vecs = invert(rot, ae)
        inv_set = build_embedding_set(
            ae_set.utt_ids(),
            [r.spk_id for r in ae_set.records],
            inv_vecs,
            [r.gender for r in ae_set.records],
        )
        ce_clear_set = build_embedding_set(
            ce_set.utt_ids(),
            [r.spk_id for r in ce_set.records],
            ce,
            [r.gender for r in ce_set.records],
        )
        report.top1_by_gender[g] = top1_accuracy(inv_set, ce_clear_set)
        report.eer_by_gender[g] = _eval_eer(inv_set, ce_clear_set, normalize_scores)
    report.objective = total_obj
    return report
