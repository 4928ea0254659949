"""Shared fixtures and helpers for the test suite."""

import json
import subprocess
import sys

import numpy as np
import pytest

from anonbench.synthgen import TwoCovSpec, gen_two_cov


@pytest.fixture(scope="session")
def small_twocov():
    """200 speakers x 10 utts, D=8, the standard desk-scale corpus."""
    return gen_two_cov(TwoCovSpec(dim=8, n_speakers=200, utts_per_speaker=10, seed=1))


@pytest.fixture
def run_cli(tmp_path):
    """Run the CLI in a subprocess, returning (exit_code, stdout, stderr)."""

    def _run(*args, cwd=None):
        proc = subprocess.run(
            [sys.executable, "-m", "anonbench.cli", *map(str, args)],
            capture_output=True,
            text=True,
            cwd=cwd or tmp_path,
        )
        return proc.returncode, proc.stdout, proc.stderr

    return _run


def parse_json_report(stdout: str) -> dict:
    return json.loads(stdout.strip().splitlines()[-1])


def cosine_eer_on(emb):
    """Cosine-scored speaker-verification EER with half/half enroll-test split."""
    from anonbench.metrics import ScoreSplit, compute_eer
    from anonbench.scoring import length_normalize

    enroll, tests = {}, []
    for spk, recs in emb.by_speaker().items():
        half = max(1, len(recs) // 2)
        enroll[spk] = length_normalize(np.mean([r.vec for r in recs[:half]], axis=0))
        tests.extend((spk, length_normalize(r.vec)) for r in recs[half:])
    genuine, impostor = [], []
    for espk, evec in enroll.items():
        for tspk, tvec in tests:
            (genuine if espk == tspk else impostor).append(float(evec @ tvec))
    return compute_eer(ScoreSplit(np.array(genuine), np.array(impostor)))[0]
