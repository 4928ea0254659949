"""Trial scoring back-ends: cosine similarity and two-covariance PLDA.

The PLDA generative model assumes a speaker mean y ~ N(mu, B^-1) and
utterance vectors x | y ~ N(y, W^-1), with B and W the between- and
within-speaker precision matrices. Fitting uses EM; scoring is the
closed-form log-likelihood ratio of the same- vs different-speaker
hypotheses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

from .corpus import EmbeddingSet, Trial, ScoreSet


def length_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=v.ndim > 1)
    if np.any(norm == 0):
        raise ValueError("cannot length-normalize a zero vector")
    return v / norm


def enroll_average(emb: EmbeddingSet, spk_id: str) -> np.ndarray:
    vecs = [r.vec for r in emb.records if r.spk_id == spk_id]
    if not vecs:
        raise ValueError(f"unknown speaker {spk_id!r}")
    return np.mean(vecs, axis=0)


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass
class PldaModel:
    """Two-covariance PLDA parameters (precision form)."""

    mu: np.ndarray
    B: np.ndarray  # between-speaker precision
    W: np.ndarray  # within-speaker precision

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        for name, m in (("B", self.B), ("W", self.W)):
            if np.max(np.abs(m - m.T)) > 1e-9:
                raise ValueError(f"{name} is not symmetric")
            if np.min(np.linalg.eigvalsh(m)) <= 0:
                raise ValueError(f"{name} is not positive definite")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu contains non-finite values")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _ridge_spd(m: np.ndarray) -> np.ndarray:
    """Return m, with a small ridge added if its Cholesky fails."""
    try:
        cholesky(m)
        return m
    except np.linalg.LinAlgError:
        pass
    except Exception:
        pass
    d = m.shape[0]
    ridged = m + np.eye(d) * (1e-6 * np.trace(m) / d + 1e-12)
    cholesky(ridged)  # raise if still singular
    return ridged


def _scatter_init(emb: EmbeddingSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """mu, between-class and within-class covariance estimates."""
    x = emb.matrix()
    mu = x.mean(axis=0)
    d = x.shape[1]
    groups = emb.by_speaker()
    means = np.stack([np.mean([r.vec for r in g], axis=0) for g in groups.values()])
    bc = np.cov(means.T, bias=True).reshape(d, d)
    within = np.zeros((d, d))
    n = 0
    for g in groups.values():
        gx = np.stack([r.vec for r in g])
        dev = gx - gx.mean(axis=0)
        within += dev.T @ dev
        n += len(g)
    wc = within / n
    return mu, _ridge_spd(bc), _ridge_spd(wc)


def plda_fit(
    emb: EmbeddingSet, iters: int = 10, seed: int | None = None
) -> tuple[PldaModel, list[float]]:
    """EM estimation of the two-covariance model.

    The seed parameter is reserved for interface stability; the EM
    iteration itself is deterministic.

    Returns the model and the per-iteration marginal log-likelihood,
    which is non-decreasing up to numerical slack.
    """
    del seed
    groups = emb.by_speaker()
    if len(groups) < 2:
        raise ValueError("PLDA training needs at least 2 speakers")
    d = emb.dim
    n_total = len(emb)
    if n_total <= d:
        warnings.warn(
            f"only {n_total} utterances for dimension {d}; PLDA estimates may be poor"
        )

    mu, bc_cov, wc_cov = _scatter_init(emb)
    B = np.linalg.inv(bc_cov)
    W = np.linalg.inv(wc_cov)

    spk_sums = np.stack([np.sum([r.vec for r in g], axis=0) for g in groups.values()])
    spk_counts = np.array([len(g) for g in groups.values()], dtype=float)
    spk_sq = np.zeros((d, d))
    for g in groups.values():
        gx = np.stack([r.vec for r in g])
        spk_sq += gx.T @ gx

    loglik: list[float] = []
    for _ in range(iters):
        # E-step: exact Gaussian posterior of each speaker mean
        post_means = np.empty_like(spk_sums)
        post_covs = []
        ll = 0.0
        logdet_B = np.linalg.slogdet(B)[1]
        logdet_W = np.linalg.slogdet(W)[1]
        mu_B_mu = mu @ B @ mu
        for i, (s_sum, n_i) in enumerate(zip(spk_sums, spk_counts)):
            L = B + n_i * W
            gamma = B @ mu + W @ s_sum
            cf = cho_factor(L)
            m_i = cho_solve(cf, gamma)
            post_means[i] = m_i
            post_covs.append(cho_solve(cf, np.eye(d)))
            logdet_L = 2.0 * np.sum(np.log(np.diag(cf[0])))
            ll += 0.5 * (
                logdet_B
                - logdet_L
                + n_i * logdet_W
                - n_i * d * np.log(2 * np.pi)
                - mu_B_mu
                + gamma @ m_i
            )
        ll -= 0.5 * np.einsum("ij,ij->", W, spk_sq)
        loglik.append(float(ll))

        # M-step from posterior moments
        mu = post_means.mean(axis=0)
        dev = post_means - mu
        bc = dev.T @ dev / len(groups) + np.mean(post_covs, axis=0)
        wc = spk_sq.copy()
        for m_i, c_i, n_i, s_sum in zip(post_means, post_covs, spk_counts, spk_sums):
            wc -= np.outer(m_i, s_sum) + np.outer(s_sum, m_i)
            wc += n_i * (np.outer(m_i, m_i) + c_i)
        wc /= n_total
        bc = 0.5 * (bc + bc.T)
        wc = 0.5 * (wc + wc.T)
        B = np.linalg.inv(_ridge_spd(bc))
        W = np.linalg.inv(_ridge_spd(wc))
        B = 0.5 * (B + B.T)
        W = 0.5 * (W + W.T)

    return PldaModel(mu=mu, B=B, W=W), loglik


def _gauss_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = x.shape[0]
    cf = cho_factor(cov)
    dev = x - mean
    maha = dev @ cho_solve(cf, dev)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return float(-0.5 * (d * np.log(2 * np.pi) + logdet + maha))


def plda_score(model: PldaModel, a: np.ndarray, b: np.ndarray) -> float:
    """Log-likelihood ratio log p(a,b|same) - log p(a)p(b|different)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = model.dim
    if a.shape != (d,) or b.shape != (d,):
        raise ValueError(f"vectors must have dimension {d}")
    phi_b = np.linalg.inv(model.B)
    phi_w = np.linalg.inv(model.W)
    phi_t = phi_b + phi_w
    joint_cov = np.block([[phi_t, phi_b], [phi_b, phi_t]])
    joint_mean = np.concatenate([model.mu, model.mu])
    same = _gauss_logpdf(np.concatenate([a, b]), joint_mean, joint_cov)
    diff = _gauss_logpdf(a, model.mu, phi_t) + _gauss_logpdf(b, model.mu, phi_t)
    return same - diff


def save_plda(model: PldaModel, path) -> None:
    from .corpus import save_matrix

    stacked = np.vstack([model.mu[None, :], model.B, model.W])
    save_matrix(stacked, path)


def load_plda(path) -> PldaModel:
    from .corpus import load_matrix

    stacked = load_matrix(path)
    d = stacked.shape[1]
    if stacked.shape[0] != 2 * d + 1:
        raise ValueError(f"bad PLDA model file shape {stacked.shape}")
    return PldaModel(mu=stacked[0], B=stacked[1 : d + 1], W=stacked[d + 1 :])


def score_trials(
    trials: list[Trial],
    enroll_vectors: dict[str, np.ndarray],
    test_vectors: dict[str, np.ndarray],
    scorer,
) -> ScoreSet:
    """Apply a pairwise scorer to every trial."""
    entries = []
    for t in trials:
        if t.enroll_id not in enroll_vectors:
            raise KeyError(f"no enrollment vector for {t.enroll_id!r}")
        if t.test_id not in test_vectors:
            raise KeyError(f"no test vector for {t.test_id!r}")
        entries.append(
            (t.enroll_id, t.test_id, float(scorer(enroll_vectors[t.enroll_id], test_vectors[t.test_id])))
        )
    return ScoreSet(entries)
