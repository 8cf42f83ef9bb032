"""Batch driver for the whole pipeline.

Subcommands: synth-corpus, featurize, pretrain, extract, similarity, probe,
sweep-correlate, scale-study, grad-check. Every subcommand takes --seed
(or a config key) and is replay-deterministic: identical config and seed
produce byte-identical CSV/JSON outputs. Exit codes: 0 success, 2 usage,
3 configuration, 1 runtime.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, probe as probe_mod
from .corpus import (
    CorpusManifest,
    SyntheticSpec,
    default_transition,
    generate_synthetic_corpus,
    load_sequences,
    log_mel,
    normalize_sequences,
    read_wav,
    write_features,
)
from .corpus.io import ManifestEntry
from .errors import ConfigError, InvalidInputError, RepsimError
from .nn.encoders import EncoderSpec  # noqa: F401  (re-exported for config docs)
from .pretrain import (
    Checkpoint,
    MODEL_NAMES,
    SWEEP_MODEL_NAMES,
    extract_representations,
    model_config,
    model_from_checkpoint,
    sweep_checkpoint_steps,
    train,
    write_representations,
)
from .pretrain.verify import grad_check_model
from .runconfig import RunConfig
from .similarity import Provenance, build_heatmap, pool_frames
from .probe import PHONE, SPEAKER, phone_probe_splits, run_probe, speaker_probe_splits

log = logging.getLogger("repsim.cli")


def _setup_logging() -> None:
    level = os.environ.get("REPSIM_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


_FLAG_KEYS = (
    "seed", "out", "models", "measure", "max_frames", "hidden", "epochs",
    "jobs", "batch_size", "lr", "manifest", "checkpoint", "checkpoints",
    "split", "wav_dir", "from_table", "manifests", "reference",
    "probe_manifest", "include_surface", "normalize",
)


def _load_config(args: argparse.Namespace) -> RunConfig:
    """Config file values overridden by any flags the subcommand defines."""
    cfg = RunConfig.load(getattr(args, "config", None))
    for key in _FLAG_KEYS:
        if hasattr(args, key):
            cfg.override(key, getattr(args, key))
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.require("out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(cfg: RunConfig, key: str = "manifest") -> CorpusManifest:
    path = cfg.require(key)
    if not Path(path).exists():
        raise ConfigError(f"manifest not found: {path}")
    return CorpusManifest.load(path)


def _sequences(cfg: RunConfig, manifest: CorpusManifest, split: str | None):
    seqs = load_sequences(manifest, split)
    if cfg.get("normalize", False):
        seqs = normalize_sequences(seqs)
    return seqs


def _synthetic_spec(cfg: RunConfig) -> SyntheticSpec:
    num_phones = cfg.get_int("corpus.num_phones", 42)
    self_loop = cfg.get_float("corpus.self_loop", 0.85)
    return SyntheticSpec(
        seed=cfg.seed,
        num_speakers=cfg.get_int("corpus.num_speakers", 20),
        num_phones=num_phones,
        utterances_per_speaker=cfg.get_int("corpus.utterances_per_speaker", 30),
        frame_rate=cfg.get_float("corpus.frame_rate", 100.0),
        transition=default_transition(num_phones, self_loop),
        noise_sigma=cfg.get_float("corpus.noise_sigma", 0.1),
        min_seconds=cfg.get_float("corpus.min_seconds", 0.6),
        max_seconds=cfg.get_float("corpus.max_seconds", 1.2),
        prototype_scale=cfg.get_float("corpus.prototype_scale", 3.0),
        speaker_offset_scale=cfg.get_float("corpus.speaker_offset_scale", 1.5),
        gain_jitter=cfg.get_float("corpus.gain_jitter", 0.1),
    )


def cmd_synth_corpus(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    spec = _synthetic_spec(cfg)
    manifest = generate_synthetic_corpus(spec, out)
    (out / "provenance.txt").write_text("\n".join(cfg.provenance_lines()) + "\n")
    print(f"wrote {len(manifest.entries)} utterances to {out}")
    return 0


def cmd_featurize(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    wav_dir = Path(cfg.require("wav_dir"))
    if not wav_dir.is_dir():
        raise ConfigError(f"wav directory not found: {wav_dir}")
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)
    entries = []
    for wav_path in sorted(wav_dir.glob("*.wav")):
        samples, rate = read_wav(wav_path)
        feats = log_mel(samples, rate, n_mels=cfg.get_int("featurize.n_mels", 80))
        rel = f"features/{wav_path.stem}.fmat"
        write_features(out / rel, feats.astype(np.float32))
        entries.append(
            ManifestEntry(
                utterance_id=wav_path.stem,
                features=rel,
                speaker_id=cfg.get("featurize.speaker", "unknown"),
                labels=None,
                split="train",
            )
        )
    if not entries:
        raise ConfigError(f"no .wav files under {wav_dir}")
    manifest = CorpusManifest(entries=entries, root=out)
    manifest.save(out / "manifest.jsonl")
    (out / "provenance.txt").write_text("\n".join(cfg.provenance_lines()) + "\n")
    print(f"featurized {len(entries)} files to {out}")
    return 0


def _train_one(cfg: RunConfig, name: str, sequences, checkpoint_at=None):
    config = model_config(
        name,
        hidden=cfg.get_int("hidden", 64),
        apc_shift=cfg.get_int("train.apc_shift", 3),
        cpc_horizon=cfg.get_int("train.cpc_horizon", 3),
        cpc_negatives=cfg.get_int("train.cpc_negatives", 10),
    )
    return train(
        config,
        sequences,
        epochs=cfg.get_int("epochs", 10),
        batch_size=cfg.get_int("batch_size", 32),
        lr=cfg.get_float("lr", 1e-3),
        seed=cfg.seed,
        checkpoint_every=cfg.get_int("train.checkpoint_every", 0),
        checkpoint_at=checkpoint_at,
        keep_model=True,
    )


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    sequences = _sequences(cfg, manifest, "train")
    for name in cfg.model_names():
        result = _train_one(cfg, name, sequences)
        model_dir = out / name
        model_dir.mkdir(exist_ok=True)
        result.save_loss_log(model_dir / "loss_log.csv")
        with open(model_dir / "loss_log.csv", "r+") as fh:
            body = fh.read()
            fh.seek(0)
            fh.write("".join(f"# {line}\n" for line in cfg.provenance_lines()) + body)
        for ckpt in result.checkpoints:
            ckpt.save(model_dir / f"step{ckpt.step:06d}.ckpt")
        final = result.checkpoints[-1]
        print(f"{name}: {final.step} steps, final running loss {final.running_loss:.4f}")
    return 0


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    split = cfg.get("split")
    sequences = _sequences(cfg, manifest, split)
    ckpt = Checkpoint.load(cfg.require("checkpoint"))
    reps = extract_representations(ckpt, sequences)
    write_representations(reps, sequences, out, split=split or "train")
    (out / "provenance.txt").write_text("\n".join(cfg.provenance_lines()) + "\n")
    print(f"extracted {len(reps)} utterances ({ckpt.checkpoint_id}) to {out}")
    return 0


def cmd_similarity(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    split = cfg.get("split")
    sequences = _sequences(cfg, manifest, split)
    max_frames = cfg.get_int("max_frames", 20000)
    measure = cfg.get("measure", "lincka")
    ckpt_paths = cfg.require("checkpoints")
    if isinstance(ckpt_paths, str):
        ckpt_paths = [p for p in ckpt_paths.split(",") if p]
    manifest_id = manifest.content_id() + f":{split or 'all'}"
    named = []
    for path in ckpt_paths:
        ckpt = Checkpoint.load(path)
        reps = extract_representations(ckpt, sequences)
        prov = Provenance(ckpt.config.name, ckpt.checkpoint_id, manifest_id, cfg.seed)
        named.append((ckpt.config.name, pool_frames(reps, max_frames, cfg.seed, prov)))
    if cfg.get("include_surface", False):
        frames = [np.asarray(s.frames, dtype=np.float64) for s in sequences]
        prov = Provenance("logmel", "surface", manifest_id, cfg.seed)
        named.append(("logmel", pool_frames(frames, max_frames, cfg.seed, prov)))
    kwargs = {}
    if measure == "svcca":
        kwargs = {
            "variance_keep": cfg.get_float("svcca.variance_keep", 0.99),
            "ridge": cfg.get_float("svcca.ridge", 1e-6),
        }
    heatmap = build_heatmap(named, measure=measure, jobs=cfg.get_int("jobs"), **kwargs)
    heatmap.check()
    heatmap.to_csv(out / "heatmap.csv", header_lines=cfg.provenance_lines())
    heatmap.to_json(out / "heatmap.json", provenance=cfg.provenance_dict())
    print(f"heatmap over {len(named)} representations -> {out / 'heatmap.csv'}")
    return 0


def cmd_probe(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    sequences = _sequences(cfg, manifest, None)
    splits = [e.split for e in manifest.entries]
    ckpt = Checkpoint.load(cfg.require("checkpoint"))
    reps = extract_representations(ckpt, sequences)
    labels = [s.phone_labels for s in sequences]
    speakers = [s.speaker_id for s in sequences]
    num_phones = cfg.get_int("corpus.num_phones", 42)
    runs = cfg.get_int("probe.runs", 5)
    results = [
        run_probe(
            PHONE,
            phone_probe_splits(reps, labels, splits, num_phones, seed=cfg.seed),
            base_seed=cfg.seed,
            runs=runs,
            epochs=cfg.get_int("probe.epochs", 10),
            lr=cfg.get_float("probe.lr", 1e-4),
            jobs=cfg.get_int("jobs"),
        ),
        run_probe(
            SPEAKER,
            speaker_probe_splits(reps, speakers, splits),
            base_seed=cfg.seed,
            runs=runs,
            epochs=cfg.get_int("probe.epochs", 10),
            lr=cfg.get_float("probe.lr", 1e-4),
            jobs=cfg.get_int("jobs"),
        ),
    ]
    report_path = out / "probe_report.json"
    probe_mod.write_probe_report(
        report_path, results, model=ckpt.config.name, checkpoint=ckpt.checkpoint_id,
        provenance=cfg.provenance_dict(),
    )
    for r in results:
        print(f"{r.task}: error {r.error_rate:.4f} +- {r.error_std:.4f}")
    return 0


def cmd_sweep_correlate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    table = cfg.get("from_table")
    if table:
        points = analysis.read_sweep_table(table)
        results = {Path(table).stem: analysis.correlate_sweep(points)}
        analysis.write_sweep_table(points, out / "sweep_table.csv", cfg.provenance_lines())
    else:
        manifest = _manifest(cfg)
        sequences = _sequences(cfg, manifest, None)
        train_seqs = [s for s, e in zip(sequences, manifest.entries) if e.split == "train"]
        splits = [e.split for e in manifest.entries]
        results = {}
        all_points = []
        for name in cfg.model_names(default=list(SWEEP_MODEL_NAMES)):
            epochs = cfg.get_int("epochs", 10)
            batch_size = cfg.get_int("batch_size", 32)
            n_batches = -(-len(train_seqs) // batch_size)
            steps = sweep_checkpoint_steps(
                epochs * n_batches,
                count=cfg.get_int("sweep.checkpoints", 15),
                burn_in=cfg.get_float("sweep.burn_in", 0.1),
            )
            config = model_config(name, hidden=cfg.get_int("hidden", 64))
            result = train(
                config, train_seqs,
                epochs=epochs, batch_size=batch_size,
                lr=cfg.get_float("lr", 1e-3), seed=cfg.seed, checkpoint_at=steps,
            )
            points, corr = analysis.checkpoint_sweep(
                result.checkpoints,
                sequences,
                splits,
                cfg.get_int("corpus.num_phones", 42),
                probe_seed=cfg.seed,
                runs=cfg.get_int("probe.runs", 5),
                probe_epochs=cfg.get_int("probe.epochs", 10),
                probe_lr=cfg.get_float("probe.lr", 1e-4),
                jobs=cfg.get_int("jobs"),
            )
            results[name] = corr
            all_points.extend(points)
        analysis.write_sweep_table(all_points, out / "sweep_table.csv", cfg.provenance_lines())
    analysis.write_correlation_summary(results, out / "correlation_summary.csv",
                                       cfg.provenance_lines())
    for model, corr in results.items():
        for task, res in corr.items():
            star = "*" if res.significant else " "
            print(f"{model} {task}: r={res.r:+.3f} p={res.p_value:.2e}{star} n={res.n}")
    return 0


def cmd_scale_study(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest_paths = cfg.require("manifests")
    if isinstance(manifest_paths, str):
        manifest_paths = [p for p in manifest_paths.split(",") if p]
    reference = _manifest(cfg, "reference")
    probe_manifest = _manifest(cfg, "probe_manifest")
    probe_sequences = _sequences(cfg, probe_manifest, None)
    probe_splits = [e.split for e in probe_manifest.entries]
    sized = []
    for path in manifest_paths:
        m = CorpusManifest.load(path)
        sized.append((Path(path).parent.name or str(path), _sequences(cfg, m, "train")))
    ref_seqs = _sequences(cfg, reference, "train")
    results = []
    for name in cfg.model_names(default=list(SWEEP_MODEL_NAMES)):
        config = model_config(name, hidden=cfg.get_int("hidden", 64))
        results.append(
            analysis.data_scaling_study(
                config, sized, ref_seqs, probe_sequences, probe_splits,
                cfg.get_int("corpus.num_phones", 42),
                epochs=cfg.get_int("epochs", 10),
                batch_size=cfg.get_int("batch_size", 32),
                lr=cfg.get_float("lr", 1e-3),
                seed=cfg.seed,
                max_frames=cfg.get_int("max_frames", 20000),
                pool_seed=cfg.seed,
                probe_seed=cfg.seed,
                runs=cfg.get_int("probe.runs", 5),
                probe_epochs=cfg.get_int("probe.epochs", 10),
                probe_lr=cfg.get_float("probe.lr", 1e-4),
            )
        )
    analysis.write_scaling_tables(
        results, out / "scaling_similarity.csv", out / "scaling_errors.csv",
        cfg.provenance_lines(),
    )
    for res in results:
        sims = " ".join(f"{v:.3f}" for v in res.similarities)
        print(f"{res.model}: similarity per size [{sims}] decreasing={res.similarity_decreasing}")
    return 0


def cmd_grad_check(args) -> int:
    cfg = _load_config(args)
    tolerance = cfg.get_float("gradcheck.tolerance", 1e-4)
    failures = 0
    for name in cfg.model_names(default=list(MODEL_NAMES)):
        overrides = {}
        if name.startswith("cpc"):
            overrides["cpc_negatives"] = cfg.get_int("train.cpc_negatives", 6)
        config = model_config(name, hidden=cfg.get_int("hidden", 16), **overrides)
        report = grad_check_model(
            config,
            T=cfg.get_int("gradcheck.frames", 12),
            batch_size=cfg.get_int("batch_size", 2),
            seed=cfg.seed,
        )
        worst_name = max(report, key=lambda k: report[k].norm_rel)
        worst = report[worst_name].norm_rel
        ok = worst < tolerance
        failures += 0 if ok else 1
        print(f"{'OK  ' if ok else 'FAIL'} {name}: worst {worst:.3e} ({worst_name})")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repsim",
        description="Pre-train toy speech models, measure representation "
        "similarity, probe content, correlate loss with error.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("--config", help="JSON config with flat dotted keys")
        p.add_argument("--seed", type=int, help="global seed (mandatory here or in config)")
        if out:
            p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker pool size")
        p.add_argument("--normalize", action="store_true", default=None,
                       help="per-utterance mean/variance feature normalization")

    p = sub.add_parser("synth-corpus", help="generate the labeled synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("featurize", help="log-Mel features for a directory of WAV files")
    common(p)
    p.add_argument("--wav-dir", dest="wav_dir")
    p.set_defaults(func=cmd_featurize, config_keys=["wav_dir"])

    p = sub.add_parser("pretrain", help="train models on a manifest's train split")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--models", help="comma-separated model names")
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("extract", help="write representations for a manifest split")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.add_argument("--split")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("similarity", help="pairwise similarity heatmap over checkpoints")
    common(p)
    p.add_argument("--checkpoints", help="comma-separated checkpoint files")
    p.add_argument("--manifest")
    p.add_argument("--split")
    p.add_argument("--measure", choices=["lincka", "svcca"])
    p.add_argument("--max-frames", dest="max_frames", type=int)
    p.add_argument("--include-surface", dest="include_surface", action="store_true",
                   default=None, help="add the raw log-Mel row")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("probe", help="phone + speaker probes for one checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep-correlate", help="loss-vs-error correlation over a checkpoint sweep")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--models")
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--from-table", dest="from_table",
                   help="skip training; correlate an existing sweep table CSV")
    p.set_defaults(func=cmd_sweep_correlate)

    p = sub.add_parser("scale-study", help="similarity/probe trends across data sizes")
    common(p)
    p.add_argument("--manifests", help="comma-separated manifests, sizes strictly increasing")
    p.add_argument("--reference", help="reference-size manifest")
    p.add_argument("--probe-manifest", dest="probe_manifest")
    p.add_argument("--models")
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_scale_study)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    common(p, out=False)
    p.add_argument("--models")
    p.add_argument("--hidden", type=int)
    p.set_defaults(func=cmd_grad_check)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 3
    except RepsimError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
