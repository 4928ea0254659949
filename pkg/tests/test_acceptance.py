"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Corpus-scale speaker-anonymization results need speech data and trained
neural models, so acceptance substitutes analytical oracles, hand-checked
micro-examples, and qualitative trend reproductions on synthetic data.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import linear_sum_assignment

from anonbench.featxform import Codebook, FrameSequence, vq_apply, vq_train
from anonbench.f0xform import F0Stats, f0_awgn, f0_linear_shift, f0_quantize, f0_stats
from anonbench.corpus import F0Track
from anonbench.inversion import (
    AlignmentConfig,
    procrustes,
    run_attack_scenario,
    wasserstein_procrustes,
)
from anonbench.metrics import ScoreSplit, compute_eer, linkability
from anonbench.scoring import PldaModel, plda_fit, plda_score
from anonbench.synthgen import TwoCovSpec, gen_rotated_pair, gen_two_cov, random_orthogonal
from anonbench.targetsel import (
    select_constant,
    select_farther,
    select_random_speaker,
    target_level_eer,
)
from anonbench.wer import Op, align, edit_distance, mispronunciation_wer, tokenize, wer

from conftest import cosine_eer_on


def _report(capsys, number, description, passed):
    with capsys.disabled():
        status = "PASS" if passed else "FAIL"
        print(f"ACCEPTANCE {number:2d} {status}: {description}")
    assert passed, f"criterion {number}: {description}"


def test_criterion_01_eer_hand_oracle(capsys):
    split = ScoreSplit(np.array([0.9, 0.8, 0.3]), np.array([0.7, 0.2, 0.1]))
    t0 = time.perf_counter()
    eer, threshold = compute_eer(split)
    elapsed = time.perf_counter() - t0
    brute = []
    for t in np.concatenate([split.genuine, split.impostor, [1.9]]):
        far = np.mean(split.impostor >= t)
        frr = np.mean(split.genuine < t)
        brute.append((abs(far - frr), (far + frr) / 2.0))
    brute_eer = min(brute)[1]
    passed = (
        abs(eer - 1.0 / 3.0) < 1e-12
        and abs(brute_eer - 1.0 / 3.0) < 1e-12
        and elapsed < 1e-3
    )
    _report(capsys, 1, "EER hand oracle {0.9,0.8,0.3} vs {0.7,0.2,0.1} = 1/3", passed)


def test_criterion_02_constant_target_half_eer(capsys):
    pool = gen_two_cov(TwoCovSpec(dim=8, n_speakers=50, utts_per_speaker=3, seed=41))
    passed = True
    for seed in (42, 43):
        inputs = gen_two_cov(
            TwoCovSpec(dim=8, n_speakers=25, utts_per_speaker=4, seed=seed)
        )
        assignment = select_constant(pool, "spk00001", inputs)
        passed = passed and abs(target_level_eer(assignment, inputs) - 0.5) < 1e-12
    _report(capsys, 2, "constant-target strategy gives target-level EER 0.5", passed)


def test_criterion_03_target_selection_bias(capsys):
    t0 = time.perf_counter()
    pool = gen_two_cov(
        TwoCovSpec(dim=16, n_speakers=2000, utts_per_speaker=1, sigma_between=1.0,
                   sigma_within=0.3, seed=44)
    )
    inputs = gen_two_cov(
        TwoCovSpec(dim=16, n_speakers=100, utts_per_speaker=10, seed=45)
    )
    farther = select_farther(pool, inputs, n_far=200, n_rand=100, seed=46)
    random = select_random_speaker(pool, inputs, seed=46)
    eer_far = target_level_eer(farther, inputs)
    eer_rand = target_level_eer(random, inputs)
    elapsed = time.perf_counter() - t0
    passed = eer_far < 0.15 and abs(eer_rand - 0.5) <= 0.03 and elapsed < 30.0
    _report(
        capsys, 3,
        f"farther-200-random-100 EER {eer_far:.3f} < 0.15, "
        f"random-speaker {eer_rand:.3f} = 0.5 +/- 0.03",
        passed,
    )


def test_criterion_04_procrustes_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(47)
    a = rng.standard_normal((500, 16))
    r = random_orthogonal(16, rng)
    rot = procrustes(a, a @ r)
    recovery = np.linalg.norm(rot.w - r, "fro")

    clear = gen_two_cov(TwoCovSpec(dim=8, n_speakers=40, utts_per_speaker=5, seed=48))
    anon, _, _ = gen_rotated_pair(clear, seed=49)
    report = run_attack_scenario(
        clear, anon, clear, anon, AlignmentConfig(seed=50), supervised=True
    )
    elapsed = time.perf_counter() - t0
    passed = (
        recovery < 1e-8 and report.top1_by_gender["all"] == 1.0 and elapsed < 1.0
    )
    _report(
        capsys, 4,
        f"Procrustes recovery |W-R|={recovery:.1e} < 1e-8, oracle attack top1 = 1.0",
        passed,
    )


def test_criterion_05_wasserstein_procrustes(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(51)
    n, d = 120, 8
    a = rng.standard_normal((n, d))
    s = 0.02 * rng.standard_normal((d, d))
    r = expm(s - s.T)
    perm = rng.permutation(n)
    b = (a @ r)[perm]
    rot, got_perm = wasserstein_procrustes(
        a, b, AlignmentConfig(batch_size=n, n_iters=60, seed=52)
    )
    inverse = np.empty(n, dtype=int)
    inverse[perm] = np.arange(n)
    full_exact = (
        np.linalg.norm(rot.w - r, "fro") < 1e-6 and np.array_equal(got_perm, inverse)
    )

    n2 = 300
    a2 = rng.standard_normal((n2, d))
    r2 = random_orthogonal(d, rng)
    b2 = (a2 @ r2)[rng.permutation(n2)]
    rot2, _ = wasserstein_procrustes(
        a2, b2, AlignmentConfig(batch_size=64, n_iters=300, seed=53)
    )
    cost = (
        np.sum(a2 ** 2, axis=1)[:, None] - 2.0 * a2 @ b2.T
        + np.sum(b2 ** 2, axis=1)[None, :]
    )
    rows, cols = linear_sum_assignment(cost)
    identity_obj = cost[rows, cols].sum()
    elapsed = time.perf_counter() - t0
    passed = full_exact and rot2.train_objective < identity_obj and elapsed < 60.0
    _report(
        capsys, 5,
        "Wasserstein Procrustes: full-batch exact recovery, stochastic beats identity",
        passed,
    )


def test_criterion_06_plda(capsys):
    t0 = time.perf_counter()
    emb = gen_two_cov(TwoCovSpec(dim=8, n_speakers=200, utts_per_speaker=10, seed=54))
    _, loglik = plda_fit(emb, iters=10)
    monotone = bool(np.all(np.diff(loglik) >= -1e-8 * np.abs(np.array(loglik[:-1]))))

    model_1d = PldaModel(mu=np.zeros(1), B=np.eye(1), W=np.eye(1))
    rng = np.random.default_rng(55)
    y = np.linspace(-12.0, 12.0, 200001)

    def norm(x, m):
        return np.exp(-0.5 * (x - m) ** 2) / np.sqrt(2 * np.pi)

    integration_ok = True
    for _ in range(20):
        av, bv = rng.normal(size=2)
        same = np.trapezoid(norm(av, y) * norm(bv, y) * norm(y, 0.0), y)
        diff = np.trapezoid(norm(av, y) * norm(y, 0.0), y) * np.trapezoid(
            norm(bv, y) * norm(y, 0.0), y
        )
        oracle = np.log(same) - np.log(diff)
        got = plda_score(model_1d, np.array([av]), np.array([bv]))
        integration_ok = integration_ok and abs(got - oracle) < 1e-6

    aniso = gen_two_cov(
        TwoCovSpec(dim=8, n_speakers=100, utts_per_speaker=10, sigma_within=0.5,
                   seed=56, sigma_within_scale=np.geomspace(1.0, 8.0, 8))
    )
    model, _ = plda_fit(aniso, iters=10)
    enroll, tests = {}, []
    for spk, recs in aniso.by_speaker().items():
        enroll[spk] = np.mean([r.vec for r in recs[:5]], axis=0)
        tests.extend((spk, r.vec) for r in recs[5:])
    genuine, impostor = [], []
    for espk, evec in enroll.items():
        for tspk, tvec in tests:
            score = plda_score(model, evec, tvec)
            (genuine if espk == tspk else impostor).append(score)
    plda_eer = compute_eer(ScoreSplit(np.array(genuine), np.array(impostor)))[0]
    cos_eer = cosine_eer_on(aniso)
    elapsed = time.perf_counter() - t0
    passed = monotone and integration_ok and plda_eer <= cos_eer and elapsed < 30.0
    _report(
        capsys, 6,
        f"PLDA: EM monotone, 1-D integration match, EER {plda_eer:.4f} <= cosine {cos_eer:.4f}",
        passed,
    )


def test_criterion_07_linkability_endpoints(capsys):
    t0 = time.perf_counter()
    disjoint = ScoreSplit(np.linspace(2.0, 3.0, 1000), np.linspace(0.0, 1.0, 1000))
    d_disjoint = linkability(disjoint).d_sys
    rng = np.random.default_rng(57)
    same = ScoreSplit(rng.normal(size=100_000), rng.normal(size=100_000))
    d_same = linkability(same).d_sys
    imp = rng.normal(size=20_000)
    gen = rng.normal(size=20_000)
    sweep = [
        linkability(ScoreSplit(gen + gap, imp)).d_sys
        for gap in np.linspace(0.0, 6.0, 13)
    ]
    monotone = bool(np.all(np.diff(sweep) >= -1e-12))
    elapsed = time.perf_counter() - t0
    passed = (
        abs(d_disjoint - 1.0) < 1e-12 and d_same < 0.05 and monotone and elapsed < 10.0
    )
    _report(
        capsys, 7,
        f"linkability endpoints: disjoint {d_disjoint:.3f}, identical {d_same:.3f}, monotone sweep",
        passed,
    )


def test_criterion_08_wer_fixture(capsys):
    ref = tokenize("THE RAINBOW IS A DIVISION OF WHITE LIGHT")
    hyp = tokenize("THE RAINBOWS DIVISION OF WHITE LIGHT")
    t0 = time.perf_counter()
    alignment = align(ref, hyp)
    base_wer = wer(alignment)
    mask = [op.op is not Op.CORRECT for op in alignment.ops]
    masked_wer = mispronunciation_wer(alignment, mask)
    elapsed = time.perf_counter() - t0
    passed = (
        edit_distance(alignment) == 3
        and len(ref) == 8
        and abs(base_wer - 0.375) < 1e-12
        and masked_wer == 0.0
        and elapsed < 1e-3
    )
    _report(capsys, 8, "WER fixture: distance 3 over 8 words = 0.375, masked = 0.0", passed)


def test_criterion_09_vq_trend(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(58)
    n_spk, frames_per_spk, dim = 10, 120, 8
    spk_means = 0.8 * rng.standard_normal((n_spk, dim))
    train_frames, eval_frames, eval_labels = [], [], []
    for i, mean in enumerate(spk_means):
        train_frames.append(mean + 0.8 * rng.standard_normal((frames_per_spk, dim)))
        eval_frames.append(mean + 0.8 * rng.standard_normal((frames_per_spk, dim)))
        eval_labels.extend([i] * frames_per_spk)
    all_train = np.concatenate(train_frames)
    all_eval = np.concatenate(eval_frames)
    eval_labels = np.array(eval_labels)

    def probe_accuracy(size):
        cb = vq_train([FrameSequence("train", all_train)], size=size, epochs=10, seed=59)
        q_train = vq_apply(cb, FrameSequence("train", all_train))[0].frames
        q_eval = vq_apply(cb, FrameSequence("eval", all_eval))[0].frames
        class_means = np.stack(
            [
                q_train[i * frames_per_spk : (i + 1) * frames_per_spk].mean(axis=0)
                for i in range(n_spk)
            ]
        )
        d2 = (
            np.sum(q_eval ** 2, axis=1)[:, None]
            - 2.0 * q_eval @ class_means.T
            + np.sum(class_means ** 2, axis=1)[None, :]
        )
        return float(np.mean(np.argmin(d2, axis=1) == eval_labels))

    accs = [probe_accuracy(s) for s in (256, 64, 16, 4)]
    trend = bool(np.all(np.diff(accs) <= 1e-12))

    from sklearn.cluster import KMeans

    blob = np.random.default_rng(7).standard_normal((1500, 4))
    cb = vq_train([FrameSequence("u", blob)], size=8, gamma=0.9, epochs=50, seed=8)
    distortion = vq_apply(cb, FrameSequence("u", blob))[2]
    best = KMeans(n_clusters=8, n_init=10, random_state=0).fit(blob).inertia_ / len(blob)
    elapsed = time.perf_counter() - t0
    passed = trend and distortion <= 1.10 * best and elapsed < 60.0
    _report(
        capsys, 9,
        f"VQ trend: probe accuracies {['%.3f' % a for a in accs]} non-increasing, "
        f"distortion {distortion / best:.3f}x Lloyd <= 1.10x",
        passed,
    )


def test_criterion_10_f0_transforms(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(60)
    track = F0Track("src", 120.0 * np.exp(0.2 * rng.standard_normal(2000)))
    target = F0Stats(np.log(200.0), 0.1)
    shifted = f0_linear_shift(track, target)
    got = f0_stats(shifted)
    shift_ok = abs(got.mu - target.mu) < 1e-9 and abs(got.sigma - target.sigma) < 1e-9

    mc = F0Track("mc", np.full(100_000, 120.0))
    noised = f0_awgn(mc, power_db=15.0, seed=61)
    added_std = float(np.std(np.log(noised.f0) - np.log(mc.f0)))
    expected = float(np.sqrt(10.0 ** 1.5))
    awgn_ok = abs(added_std - expected) / expected < 0.02

    ramp = F0Track("ramp", np.linspace(80.0, 300.0, 1000))
    quantized, _ = f0_quantize(ramp, bits=4)
    quant_ok = len(np.unique(quantized.f0)) <= 2 ** 3 + 1
    elapsed = time.perf_counter() - t0
    passed = shift_ok and awgn_ok and quant_ok and elapsed < 5.0
    _report(
        capsys, 10,
        f"F0: shift exact, AWGN std {added_std:.3f} vs {expected:.3f}, <= 9 quant levels",
        passed,
    )


def test_criterion_11_determinism(capsys, tmp_path):
    def run(args, cwd):
        proc = subprocess.run(
            [sys.executable, "-m", "anonbench.cli", *args],
            capture_output=True, text=True, cwd=cwd,
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        report.pop("wall_time_s")
        return json.dumps(report, sort_keys=True)

    passed = True
    for i in range(2):
        d = tmp_path / f"run{i}"
        d.mkdir()
        reports = []
        reports.append(run(
            ["--json", "--seed", "9", "synth", "embeddings", "--dim", "8",
             "--speakers", "40", "--utts", "4", "--out", "emb.jsonl"], d))
        reports.append(run(
            ["--json", "--seed", "9", "select-target", "--strategy", "random-speaker",
             "--pool", "emb.jsonl", "--inputs", "emb.jsonl", "--out", "tgt.jsonl"], d))
        reports.append(run(
            ["--json", "--seed", "9", "select-target", "--strategy", "farther",
             "--n-far", "20", "--n-rand", "10",
             "--pool", "emb.jsonl", "--inputs", "emb.jsonl", "--out", "tgt2.jsonl"], d))
        if i == 0:
            first = reports
            first_bytes = (d / "tgt.jsonl").read_bytes()
        else:
            passed = reports == first
            passed = passed and (d / "tgt.jsonl").read_bytes() == first_bytes
    _report(capsys, 11, "seeded reruns produce byte-identical JSON reports", passed)
