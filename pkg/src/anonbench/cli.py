"""Single command-line entry point.

Every operation is a subcommand of `anonbench`. Commands print a run
report: a human-readable table by default, or a JSON object with --json.
Exit codes: 0 success, 1 runtime error, 2 usage error. The `pipeline`
command chains subcommands from a config file, resolving relative paths
against the work directory.
"""

from __future__ import annotations

import configparser
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import corpus, f0xform, featxform, inversion, metrics, scoring, synthgen, targetsel, wer
from .corpus import Gender


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def emit_report(ctx: click.Context, metrics_map: dict, t_start: float) -> dict:
    root = ctx.find_root()
    report = {
        "command": ctx.command.name,
        "parameters": {k: _jsonable(v) for k, v in ctx.params.items()},
        "metrics": {k: _jsonable(v) for k, v in metrics_map.items()},
        "wall_time_s": round(time.perf_counter() - t_start, 6),
        "seed": root.params.get("seed"),
    }
    if root.params.get("as_json"):
        click.echo(json.dumps(report, sort_keys=True))
    else:
        for key, value in metrics_map.items():
            if key.startswith("eer") and isinstance(value, float):
                click.echo(f"{key.upper()} {100.0 * value:.2f}%")
            else:
                click.echo(f"{key} {_jsonable(value)}")
    return report["metrics"]


@click.group(no_args_is_help=False)
@click.option("--seed", type=int, default=0, show_default=True, help="Master RNG seed.")
@click.option("--json", "as_json", is_flag=True, help="Emit the run report as JSON.")
@click.option(
    "--workdir",
    type=click.Path(path_type=Path),
    default=Path("."),
    help="Base directory for pipeline artifacts.",
)
def cli(seed: int, as_json: bool, workdir: Path):
    """Embedding-space evaluation and attacks for speaker anonymization."""


# ---------------------------------------------------------------------------
# synthetic data


@cli.group()
def synth():
    """Seeded synthetic data generators."""


@synth.command("embeddings")
@click.option("--dim", type=int, default=8, show_default=True)
@click.option("--speakers", type=int, default=200, show_default=True)
@click.option("--utts", type=int, default=10, show_default=True)
@click.option("--sigma-b", type=float, default=1.0, show_default=True)
@click.option("--sigma-w", type=float, default=0.3, show_default=True)
@click.option("--female-fraction", type=float, default=0.5, show_default=True)
@click.option("--anisotropy", type=float, default=1.0, show_default=True,
              help="Condition number of the per-dimension within-speaker scale.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def synth_embeddings(ctx, dim, speakers, utts, sigma_b, sigma_w, female_fraction, anisotropy, out):
    t0 = time.perf_counter()
    scale = None
    if anisotropy != 1.0:
        scale = np.geomspace(1.0, anisotropy, dim)
    spec = synthgen.TwoCovSpec(
        dim=dim,
        n_speakers=speakers,
        utts_per_speaker=utts,
        sigma_between=sigma_b,
        sigma_within=sigma_w,
        gender_fraction_female=female_fraction,
        seed=ctx.find_root().params["seed"],
        sigma_within_scale=scale,
    )
    emb = synthgen.gen_two_cov(spec)
    corpus.save_embeddings(emb, out)
    return emit_report(ctx, {"n_records": len(emb), "dim": emb.dim}, t0)


@synth.command("rotate")
@click.option("--in", "in_path", type=click.Path(path_type=Path), required=True)
@click.option("--noise", type=float, default=0.0, show_default=True)
@click.option("--shuffle", is_flag=True)
@click.option("--out-b", type=click.Path(path_type=Path), required=True)
@click.option("--out-rot", type=click.Path(path_type=Path), required=True)
@click.option("--out-perm", type=click.Path(path_type=Path), default=None)
@click.pass_context
def synth_rotate(ctx, in_path, noise, shuffle, out_b, out_rot, out_perm):
    t0 = time.perf_counter()
    a = corpus.load_embeddings(in_path)
    b, rot, perm = synthgen.gen_rotated_pair(
        a, noise_sigma=noise, shuffle=shuffle, seed=ctx.find_root().params["seed"]
    )
    corpus.save_embeddings(b, out_b)
    corpus.save_matrix(rot, out_rot)
    if out_perm:
        with open(out_perm, "w") as fh:
            for src, dst in perm.items():
                fh.write(f"{src} {dst}\n")
    return emit_report(ctx, {"n_records": len(b)}, t0)


@synth.command("f0")
@click.option("--utts", type=int, default=1, show_default=True)
@click.option("--frames", type=int, default=500, show_default=True)
@click.option("--voiced-prob", type=float, default=0.9, show_default=True)
@click.option("--base-hz", type=float, default=120.0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def synth_f0(ctx, utts, frames, voiced_prob, base_hz, out):
    t0 = time.perf_counter()
    seed = ctx.find_root().params["seed"]
    tracks = [
        synthgen.gen_f0(frames, voiced_prob, base_hz, seed=seed + i, utt_id=f"f0_{i:04d}")
        for i in range(utts)
    ]
    corpus.save_f0(tracks, out)
    return emit_report(ctx, {"n_tracks": len(tracks)}, t0)


# ---------------------------------------------------------------------------
# scoring and metrics


@cli.command("plda-train")
@click.option("--embeddings", type=click.Path(path_type=Path), required=True)
@click.option("--iters", type=int, default=10, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def plda_train(ctx, embeddings, iters, out):
    t0 = time.perf_counter()
    emb = corpus.load_embeddings(embeddings)
    model, loglik = scoring.plda_fit(emb, iters=iters, seed=ctx.find_root().params["seed"])
    scoring.save_plda(model, out)
    final = loglik[-1] if loglik else None
    return emit_report(ctx, {"final_loglik": final, "n_iters": len(loglik)}, t0)


def _enroll_vectors(emb: corpus.EmbeddingSet, ids, length_norm, norm_before_average):
    """Enrollment vector per id; speaker ids average their utterances."""
    by_spk = emb.by_speaker()
    out = {}
    for eid in ids:
        if eid in by_spk:
            vecs = [r.vec for r in by_spk[eid]]
            if norm_before_average:
                vecs = [scoring.length_normalize(v) for v in vecs]
            v = np.mean(vecs, axis=0)
        else:
            v = emb.get(eid).vec
        out[eid] = scoring.length_normalize(v) if length_norm else v
    return out


@cli.command("score")
@click.option("--backend", type=click.Choice(["cosine", "plda"]), default="cosine", show_default=True)
@click.option("--model", type=click.Path(path_type=Path), default=None)
@click.option("--enroll", type=click.Path(path_type=Path), required=True)
@click.option("--test", type=click.Path(path_type=Path), required=True)
@click.option("--trials", type=click.Path(path_type=Path), required=True)
@click.option("--length-norm", is_flag=True, help="Length-normalize before scoring.")
@click.option("--norm-before-average", is_flag=True,
              help="Normalize enrollment vectors before averaging instead of after.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def score_cmd(ctx, backend, model, enroll, test, trials, length_norm, norm_before_average, out):
    t0 = time.perf_counter()
    trial_list = corpus.load_trials(trials)
    enroll_set = corpus.load_embeddings(enroll)
    test_set = corpus.load_embeddings(test)
    enroll_ids = {t.enroll_id for t in trial_list}
    enroll_vecs = _enroll_vectors(enroll_set, enroll_ids, length_norm, norm_before_average)
    test_vecs = {
        r.utt_id: (scoring.length_normalize(r.vec) if length_norm else r.vec)
        for r in test_set.records
    }
    if backend == "plda":
        if model is None:
            raise click.UsageError("--backend plda requires --model")
        plda = scoring.load_plda(model)
        scorer = lambda a, b: scoring.plda_score(plda, a, b)
    else:
        scorer = scoring.cosine_score
    scores = scoring.score_trials(trial_list, enroll_vecs, test_vecs, scorer)
    corpus.save_scores(scores, out)
    return emit_report(ctx, {"n_scores": len(scores.entries)}, t0)


@cli.command("eer")
@click.option("--scores", type=click.Path(path_type=Path), required=True)
@click.option("--trials", type=click.Path(path_type=Path), required=True)
@click.option("--bootstrap", type=int, default=0, show_default=True,
              help="Number of bootstrap resamples for a confidence interval.")
@click.option("--confidence", type=float, default=0.95, show_default=True)
@click.pass_context
def eer_cmd(ctx, scores, trials, bootstrap, confidence):
    t0 = time.perf_counter()
    split = metrics.split_scores(corpus.load_scores(scores), corpus.load_trials(trials))
    eer, threshold = metrics.compute_eer(split)
    out = {"eer": eer, "threshold": threshold}
    if bootstrap:
        lo, hi = metrics.eer_bootstrap_ci(
            split, n_boot=bootstrap, confidence=confidence,
            seed=ctx.find_root().params["seed"],
        )
        out["eer_ci_lo"], out["eer_ci_hi"] = lo, hi
    return emit_report(ctx, out, t0)


@cli.command("linkability")
@click.option("--scores", type=click.Path(path_type=Path), required=True)
@click.option("--trials", type=click.Path(path_type=Path), required=True)
@click.option("--bins", type=int, default=100, show_default=True)
@click.option("--omega", type=float, default=1.0, show_default=True)
@click.pass_context
def linkability_cmd(ctx, scores, trials, bins, omega):
    t0 = time.perf_counter()
    split = metrics.split_scores(corpus.load_scores(scores), corpus.load_trials(trials))
    result = metrics.linkability(split, n_bins=bins, omega=omega)
    return emit_report(ctx, {"d_sys": result.d_sys}, t0)


# ---------------------------------------------------------------------------
# target selection


@cli.command("select-target")
@click.option("--strategy", required=True,
              type=click.Choice(["constant", "random-speaker", "random-vector", "farther", "dense", "kmeans"]))
@click.option("--pool", type=click.Path(path_type=Path), required=True)
@click.option("--inputs", type=click.Path(path_type=Path), default=None)
@click.option("--level", type=click.Choice(["utt", "spk"]), default="utt", show_default=True)
@click.option("--target-id", default=None, help="Pool id for the constant strategy.")
@click.option("--n-far", type=int, default=200, show_default=True)
@click.option("--n-rand", type=int, default=100, show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--no-exclude-nearest", is_flag=True)
@click.option("--k-per-gender", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def select_target(ctx, strategy, pool, inputs, level, target_id, n_far, n_rand,
                  top_k, no_exclude_nearest, k_per_gender, out):
    t0 = time.perf_counter()
    seed = ctx.find_root().params["seed"]
    pool_set = corpus.load_embeddings(pool)
    lvl = targetsel.Level.SPEAKER if level == "spk" else targetsel.Level.UTTERANCE
    if strategy == "kmeans":
        ids = targetsel.kmeans_targets(pool_set, k_per_gender=k_per_gender, seed=seed)
        Path(out).write_text("\n".join(ids) + "\n")
        return emit_report(ctx, {"n_targets": len(ids)}, t0)
    if inputs is None:
        raise click.UsageError(f"--inputs is required for strategy {strategy}")
    input_set = corpus.load_embeddings(inputs)
    if strategy == "constant":
        if target_id is None:
            raise click.UsageError("constant strategy requires --target-id")
        assignment = targetsel.select_constant(pool_set, target_id, input_set, lvl)
    elif strategy == "random-speaker":
        assignment = targetsel.select_random_speaker(pool_set, input_set, lvl, seed)
    elif strategy == "random-vector":
        assignment = targetsel.select_random_vector(pool_set, input_set, lvl, seed)
    elif strategy == "farther":
        assignment = targetsel.select_farther(
            pool_set, input_set, n_far=n_far, n_rand=n_rand, level=lvl, seed=seed
        )
    else:
        assignment = targetsel.select_dense(
            pool_set, input_set, top_k_clusters=top_k,
            exclude_nearest=not no_exclude_nearest, level=lvl, seed=seed,
        )
    corpus.save_embeddings(assignment.to_embedding_set(input_set), out)
    eer = targetsel.target_level_eer(assignment, input_set)
    return emit_report(ctx, {"n_targets": len(assignment.targets), "eer_target_level": eer}, t0)


# ---------------------------------------------------------------------------
# F0 and feature transforms


@cli.command("f0-transform")
@click.option("--in", "in_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--chain", required=True, help='e.g. "shift:stats.txt;awgn:15;quant:4"')
@click.pass_context
def f0_transform(ctx, in_path, out, chain):
    t0 = time.perf_counter()
    transforms = f0xform.parse_chain_spec(chain, seed=ctx.find_root().params["seed"])
    tracks = [f0xform.f0_chain(tr, transforms) for tr in corpus.load_f0(in_path)]
    corpus.save_f0(tracks, out)
    return emit_report(ctx, {"n_tracks": len(tracks)}, t0)


def _load_frames_dir(path: Path) -> list[featxform.FrameSequence]:
    files = sorted(Path(path).glob("*.mat"))
    if not files:
        raise click.ClickException(f"no .mat frame files in {path}")
    return [featxform.FrameSequence(f.stem, corpus.load_matrix(f)) for f in files]


def _save_frames_dir(seqs: list[featxform.FrameSequence], path: Path) -> None:
    Path(path).mkdir(parents=True, exist_ok=True)
    for s in seqs:
        corpus.save_matrix(s.frames, Path(path) / f"{s.utt_id}.mat")


@cli.command("vq-train")
@click.option("--frames", type=click.Path(path_type=Path), required=True)
@click.option("--size", type=int, required=True)
@click.option("--gamma", type=float, default=0.99, show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def vq_train_cmd(ctx, frames, size, gamma, epochs, out):
    t0 = time.perf_counter()
    seqs = _load_frames_dir(frames)
    cb = featxform.vq_train(
        seqs, size=size, gamma=gamma, epochs=epochs, seed=ctx.find_root().params["seed"]
    )
    corpus.save_matrix(cb.prototypes, out)
    distortion = float(np.mean([featxform.vq_apply(cb, s)[2] for s in seqs]))
    return emit_report(ctx, {"size": cb.size, "distortion": distortion}, t0)


@cli.command("vq-apply")
@click.option("--codebook", type=click.Path(path_type=Path), required=True)
@click.option("--frames", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def vq_apply_cmd(ctx, codebook, frames, out):
    t0 = time.perf_counter()
    cb = featxform.Codebook(corpus.load_matrix(codebook))
    seqs = _load_frames_dir(frames)
    quantized = []
    distortions = []
    for s in seqs:
        q, _, d = featxform.vq_apply(cb, s)
        quantized.append(q)
        distortions.append(d)
    _save_frames_dir(quantized, out)
    return emit_report(ctx, {"distortion": float(np.mean(distortions))}, t0)


@cli.command("laplace")
@click.option("--frames", type=click.Path(path_type=Path), required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--mode", type=click.Choice(["utt", "frame"]), default="frame", show_default=True)
@click.option("--normalize", is_flag=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def laplace_cmd(ctx, frames, epsilon, mode, normalize, out):
    t0 = time.perf_counter()
    seqs = _load_frames_dir(frames)
    mode_name = "per_utterance" if mode == "utt" else "per_frame"
    noised = [
        featxform.laplace_noise(
            s, epsilon, mode=mode_name, normalize=normalize,
            seed=ctx.find_root().params["seed"],
        )
        for s in seqs
    ]
    _save_frames_dir(noised, out)
    return emit_report(ctx, {"n_sequences": len(noised)}, t0)


@cli.command("pca")
@click.option("--fit", type=click.Path(path_type=Path), default=None)
@click.option("--dims", type=int, default=70, show_default=True)
@click.option("--apply", "apply_model", type=click.Path(path_type=Path), default=None)
@click.option("--in", "in_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def pca_cmd(ctx, fit, dims, apply_model, in_path, out):
    t0 = time.perf_counter()
    if fit is not None:
        emb = corpus.load_embeddings(fit)
        model = featxform.pca_fit(emb.matrix(), dims)
        payload = {
            "mean": model.mean.tolist(),
            "components": model.components.tolist(),
            "ratio": model.explained_variance_ratio,
        }
        Path(out).write_text(json.dumps(payload))
        return emit_report(ctx, {"explained_variance_ratio": model.explained_variance_ratio}, t0)
    if apply_model is None or in_path is None:
        raise click.UsageError("use either --fit VECS or --apply MODEL --in VECS")
    payload = json.loads(Path(apply_model).read_text())
    model = featxform.PcaModel(
        np.array(payload["mean"]), np.array(payload["components"]), payload["ratio"]
    )
    emb = corpus.load_embeddings(in_path)
    projected = featxform.pca_apply(model, emb.matrix())
    corpus.save_embeddings(
        corpus.build_embedding_set(
            emb.utt_ids(), [r.spk_id for r in emb.records], projected,
            [r.gender for r in emb.records],
        ),
        out,
    )
    return emit_report(ctx, {"n_records": len(emb), "dims": projected.shape[1]}, t0)


# ---------------------------------------------------------------------------
# inversion attack


@cli.command("procrustes")
@click.option("--a", "a_path", type=click.Path(path_type=Path), required=True)
@click.option("--b", "b_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def procrustes_cmd(ctx, a_path, b_path, out):
    t0 = time.perf_counter()
    a = corpus.load_embeddings(a_path).matrix()
    b = corpus.load_embeddings(b_path).matrix()
    rot = inversion.procrustes(a, b)
    corpus.save_matrix(rot.w, out)
    return emit_report(ctx, {"objective": rot.train_objective}, t0)


@cli.command("wproc")
@click.option("--a", "a_path", type=click.Path(path_type=Path), required=True)
@click.option("--b", "b_path", type=click.Path(path_type=Path), required=True)
@click.option("--batch", type=int, default=256, show_default=True)
@click.option("--iters", type=int, default=500, show_default=True)
@click.option("--pca", "pca_dims", type=int, default=0, show_default=True,
              help="PCA pre-alignment dimensions; 0 disables.")
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def wproc_cmd(ctx, a_path, b_path, batch, iters, pca_dims, out):
    t0 = time.perf_counter()
    a = corpus.load_embeddings(a_path).matrix()
    b = corpus.load_embeddings(b_path).matrix()
    if pca_dims:
        a = featxform.pca_apply(featxform.pca_fit(a, pca_dims), a)
        b = featxform.pca_apply(featxform.pca_fit(b, pca_dims), b)
    config = inversion.AlignmentConfig(
        batch_size=batch, n_iters=iters, seed=ctx.find_root().params["seed"]
    )
    rot, _ = inversion.wasserstein_procrustes(a, b, config)
    corpus.save_matrix(rot.w, out)
    return emit_report(ctx, {"objective": rot.train_objective}, t0)


@cli.command("invert")
@click.option("--rot", type=click.Path(path_type=Path), required=True)
@click.option("--in", "in_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.pass_context
def invert_cmd(ctx, rot, in_path, out):
    t0 = time.perf_counter()
    rotation = inversion.Rotation(corpus.load_matrix(rot))
    emb = corpus.load_embeddings(in_path)
    inv = inversion.invert(rotation, emb.matrix())
    corpus.save_embeddings(
        corpus.build_embedding_set(
            emb.utt_ids(), [r.spk_id for r in emb.records], inv,
            [r.gender for r in emb.records],
        ),
        out,
    )
    return emit_report(ctx, {"n_records": len(emb)}, t0)


@cli.command("attack")
@click.option("--scenario", required=True,
              type=click.Choice(["supervised", "unsupervised", "oracle-sup", "oracle-unsup"]))
@click.option("--clear-train", type=click.Path(path_type=Path), default=None)
@click.option("--anon-train", type=click.Path(path_type=Path), default=None)
@click.option("--clear-eval", type=click.Path(path_type=Path), required=True)
@click.option("--anon-eval", type=click.Path(path_type=Path), required=True)
@click.option("--gender-split", is_flag=True)
@click.option("--pca", "pca_dims", type=int, default=0, show_default=True)
@click.option("--batch", type=int, default=256, show_default=True)
@click.option("--iters", type=int, default=500, show_default=True)
@click.option("--no-length-norm", is_flag=True)
@click.pass_context
def attack_cmd(ctx, scenario, clear_train, anon_train, clear_eval, anon_eval,
               gender_split, pca_dims, batch, iters, no_length_norm):
    t0 = time.perf_counter()
    ce = corpus.load_embeddings(clear_eval)
    ae = corpus.load_embeddings(anon_eval)
    oracle = scenario.startswith("oracle")
    if oracle:
        ct, at = ce, ae
    else:
        if clear_train is None or anon_train is None:
            raise click.UsageError(f"scenario {scenario} requires --clear-train and --anon-train")
        ct = corpus.load_embeddings(clear_train)
        at = corpus.load_embeddings(anon_train)
    config = inversion.AlignmentConfig(
        batch_size=batch, n_iters=iters,
        use_pca=bool(pca_dims), pca_dims=pca_dims,
        gender_split=gender_split, seed=ctx.find_root().params["seed"],
    )
    supervised = scenario in ("supervised", "oracle-sup")
    report = inversion.run_attack_scenario(
        ct, at, ce, ae, config, supervised=supervised,
        normalize_scores=not no_length_norm,
    )
    flat = {"objective": report.objective}
    for g, v in report.eer_by_gender.items():
        flat[f"eer_{g}"] = v
    for g, v in report.top1_by_gender.items():
        flat[f"top1_{g}"] = v
    return emit_report(ctx, flat, t0)


# ---------------------------------------------------------------------------
# WER


@cli.command("wer")
@click.option("--ref", type=click.Path(path_type=Path), required=True)
@click.option("--hyp", type=click.Path(path_type=Path), required=True)
@click.option("--mask", type=click.Path(path_type=Path), default=None)
@click.option("--per-utt", is_flag=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def wer_cmd(ctx, ref, hyp, mask, per_utt, out):
    t0 = time.perf_counter()
    refs = corpus.load_transcripts(ref)
    hyps = corpus.load_transcripts(hyp)
    masks = wer.load_mask_file(mask) if mask else None
    result = wer.corpus_wer(refs, hyps, masks=masks, per_utterance=per_utt)
    if out:
        Path(out).write_text(json.dumps(_jsonable(result), sort_keys=True))
    return emit_report(ctx, {"wer": result["wer"], "n_utts": len(refs)}, t0)


# ---------------------------------------------------------------------------
# pipeline


@cli.command("pipeline")
@click.argument("config_path", type=click.Path(path_type=Path))
@click.pass_context
def pipeline(ctx, config_path):
    """Run stages from a sections config file, in file order.

    Each section is "<command>" or "<command> <label>"; keys become
    --key value flags (value "true" means a bare flag). Relative paths
    are resolved against --workdir.
    """
    t0 = time.perf_counter()
    parser = configparser.ConfigParser()
    read = parser.read(config_path)
    if not read:
        raise click.ClickException(f"cannot read pipeline config {config_path}")
    root = ctx.find_root()
    workdir = Path(root.params["workdir"])
    workdir.mkdir(parents=True, exist_ok=True)
    combined = {}
    for section in parser.sections():
        tokens = section.split()
        stage = tokens[0]
        command = cli.commands.get(stage)
        if command is None or stage == "pipeline":
            raise click.ClickException(f"pipeline stage {section!r}: unknown stage {stage!r}")
        argv = [
            f"--seed={root.params['seed']}",
            f"--workdir={workdir}",
        ]
        if root.params.get("as_json"):
            argv.append("--json")
        argv.append(stage)
        if isinstance(command, click.Group):
            if len(tokens) < 2 or tokens[1] not in command.commands:
                raise click.ClickException(
                    f"pipeline stage {section!r}: {stage!r} needs a subcommand"
                )
            argv.append(tokens[1])
        for key, value in parser.items(section):
            flag = f"--{key.replace('_', '-')}"
            if value.lower() == "true":
                argv.append(flag)
            else:
                if _is_path_flag(key) and not Path(value).is_absolute():
                    value = str(workdir / value)
                argv.extend([flag, value])
        try:
            result = cli.main(args=argv, standalone_mode=False)
        except click.ClickException as exc:
            raise click.ClickException(f"pipeline stage {section!r} failed: {exc.format_message()}")
        except Exception as exc:
            raise click.ClickException(f"pipeline stage {section!r} failed: {exc}")
        if isinstance(result, dict):
            combined[section] = result
    return emit_report(ctx, {"stages": combined}, t0)


_PATH_KEYS = {
    "out", "in", "a", "b", "pool", "inputs", "enroll", "test", "trials", "scores",
    "model", "embeddings", "frames", "codebook", "ref", "hyp", "mask", "rot",
    "clear-train", "anon-train", "clear-eval", "anon-eval", "out-b", "out-rot",
    "out-perm", "fit", "apply",
}


def _is_path_flag(key: str) -> bool:
    return key.replace("_", "-") in _PATH_KEYS


def main(argv=None):
    try:
        result = cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except Exception as exc:  # runtime errors map to exit code 1
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    del result
    sys.exit(0)


if __name__ == "__main__":
    main()
