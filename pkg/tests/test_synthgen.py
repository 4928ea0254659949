"""Synthetic data generator tests."""

import numpy as np
import pytest

from anonbench.f0xform import f0_stats
from anonbench.synthgen import (
    TwoCovSpec,
    gen_f0,
    gen_rotated_pair,
    gen_two_cov,
    random_orthogonal,
)
from anonbench.inversion import procrustes

from conftest import cosine_eer_on


def test_two_cov_tiny_within_variance_collapses_utterances():
    spec = TwoCovSpec(dim=4, n_speakers=5, utts_per_speaker=6, sigma_within=1e-9, seed=0)
    emb = gen_two_cov(spec)
    for recs in emb.by_speaker().values():
        vecs = np.stack([r.vec for r in recs])
        assert np.max(np.abs(vecs - vecs[0])) < 1e-6


def test_two_cov_standard_corpus_is_linkable(small_twocov):
    assert cosine_eer_on(small_twocov) < 0.05


def test_two_cov_no_between_variance_is_chance():
    spec = TwoCovSpec(
        dim=8, n_speakers=100, utts_per_speaker=10, sigma_between=1e-9,
        sigma_within=0.3, gender_fraction_female=1.0, seed=1,
    )
    emb = gen_two_cov(spec)
    assert cosine_eer_on(emb) == pytest.approx(0.5, abs=0.03)


def test_two_cov_gender_offset_and_counts():
    spec = TwoCovSpec(dim=4, n_speakers=40, utts_per_speaker=2, seed=2)
    emb = gen_two_cov(spec)
    by_gender = {}
    for spk, recs in emb.by_speaker().items():
        by_gender.setdefault(recs[0].gender.value, []).append(
            np.mean([r.vec[0] for r in recs])
        )
    assert len(by_gender["female"]) == 20
    assert len(by_gender["male"]) == 20
    assert np.mean(by_gender["female"]) > 1.0 > -1.0 > np.mean(by_gender["male"])


def test_two_cov_reproducible():
    spec = TwoCovSpec(dim=4, n_speakers=10, utts_per_speaker=3, seed=3)
    a, b = gen_two_cov(spec), gen_two_cov(spec)
    assert np.array_equal(a.matrix(), b.matrix())


def test_two_cov_spec_validation():
    with pytest.raises(ValueError):
        TwoCovSpec(dim=0, n_speakers=1, utts_per_speaker=1)
    with pytest.raises(ValueError):
        TwoCovSpec(dim=2, n_speakers=1, utts_per_speaker=1, sigma_within=0.0)
    with pytest.raises(ValueError):
        TwoCovSpec(dim=2, n_speakers=1, utts_per_speaker=1,
                   sigma_within_scale=np.ones(3))


def test_random_orthogonal_is_orthogonal():
    rng = np.random.default_rng(4)
    for d in (2, 5, 16):
        q = random_orthogonal(d, rng)
        assert np.allclose(q.T @ q, np.eye(d), atol=1e-12)


def test_rotated_pair_ground_truth_rotation(small_twocov):
    b, rot, perm = gen_rotated_pair(small_twocov, seed=5)
    got = procrustes(small_twocov.matrix(), b.matrix())
    assert np.linalg.norm(got.w - rot, "fro") < 1e-8
    assert np.allclose(small_twocov.matrix() @ rot, b.matrix())


def test_rotated_pair_shuffle_is_bijection(small_twocov):
    b, _, perm = gen_rotated_pair(small_twocov, shuffle=True, seed=6)
    assert set(perm.keys()) == set(small_twocov.utt_ids())
    assert set(perm.values()) == set(b.utt_ids())
    for src_utt, out_utt in list(perm.items())[:50]:
        src = small_twocov.get(src_utt)
        assert b.get(out_utt).spk_id == src.spk_id


def test_rotated_pair_reproducible(small_twocov):
    b1, r1, p1 = gen_rotated_pair(small_twocov, noise_sigma=0.1, shuffle=True, seed=7)
    b2, r2, p2 = gen_rotated_pair(small_twocov, noise_sigma=0.1, shuffle=True, seed=7)
    assert np.array_equal(b1.matrix(), b2.matrix())
    assert np.array_equal(r1, r2)
    assert p1 == p2


def test_gen_f0_all_unvoiced():
    track = gen_f0(100, voiced_prob=0.0, seed=8)
    assert np.all(track.f0 == 0.0)


def test_gen_f0_walk_statistics():
    track = gen_f0(100_000, voiced_prob=1.0, base_hz=120.0, seed=9)
    stats = f0_stats(track)
    assert stats.mu == pytest.approx(np.log(120.0), abs=0.05)


def test_gen_f0_reflection_bounds():
    track = gen_f0(5000, voiced_prob=1.0, base_hz=120.0, seed=10)
    voiced = track.f0[track.f0 > 0]
    assert np.all(voiced >= 120.0 * np.exp(-0.5) - 1e-9)
    assert np.all(voiced <= 120.0 * np.exp(0.5) + 1e-9)


def test_gen_f0_validation():
    with pytest.raises(ValueError):
        gen_f0(0)
    with pytest.raises(ValueError):
        gen_f0(10, voiced_prob=1.5)
    with pytest.raises(ValueError):
        gen_f0(10, base_hz=0.0)
