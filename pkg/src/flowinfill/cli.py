"""Command-line interface.

Subcommands: gen-data, train, train-duration, synth, eval, sweep. Exit codes:
0 success, 1 configuration/usage error, 2 runtime or numerical failure.
Commands that produce a directory write a ``run.meta`` (flat key = value)
capturing the resolved options; passing it back via ``--config`` reruns the
command with identical settings (explicit flags still win).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .backbone import BackboneConfig, FieldModel, build_field_model
from .checkpoint import load_model
from .corpusio import load_corpus, save_corpus, write_features
from .duration import (
    DurationConfig,
    DurationModel,
    DurationTrainConfig,
    apply_speech_rate,
    build_duration_model,
    predict_gen_frames,
    train_duration,
)
from .exceptions import (
    ConfigError,
    FlowinfillError,
    InsufficientDuration,
    LengthOverflow,
    MarkupError,
    UnknownSymbol,
    VocabularyError,
)
from .kvconfig import read_kv, write_kv
from .sampling import NFE_SEMANTICS, SOLVERS, SamplerConfig, SynthesisRequest, synthesize
from .text import parse_markup
from .toybench import (
    ToyCorpusConfig,
    evaluate_cases,
    gen_corpus,
    make_eval_cases,
    oracle_decode,
    summarize_records,
    sweep_prompt_length,
    sweep_speech_rate,
)
from .training import TrainConfig, train

_USAGE_ERRORS = (
    ConfigError,
    MarkupError,
    UnknownSymbol,
    VocabularyError,
    InsufficientDuration,
    LengthOverflow,
    FileNotFoundError,
)


class _Parser(argparse.ArgumentParser):
    """argparse's default usage-error exit code is 2; this package uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve(workdir: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else workdir / path


def _write_run_meta(path: Path, command: str, args: argparse.Namespace) -> None:
    skip = {"func", "config"}
    values = {"command": command, "version": __version__}
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        values[key] = str(value) if isinstance(value, Path) else value
    write_kv(path, values)


def _field_model(path) -> FieldModel:
    model = load_model(path)
    if not isinstance(model, FieldModel):
        raise ConfigError(f"{path} holds a {type(model).__name__}, not a field model")
    return model


def _duration_model(path) -> DurationModel:
    model = load_model(path)
    if not isinstance(model, DurationModel):
        raise ConfigError(f"{path} holds a {type(model).__name__}, not a duration model")
    return model


def _sampler_config(args) -> SamplerConfig:
    return SamplerConfig(
        solver=args.solver,
        nfe=args.nfe,
        cfg_alpha=args.cfg_alpha,
        seed=args.seed,
        nfe_semantics=args.nfe_semantics,
    )


def _add_sampler_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--solver", choices=SOLVERS, default="midpoint")
    parser.add_argument("--nfe", type=int, default=32)
    parser.add_argument("--cfg-alpha", type=float, default=1.0)
    parser.add_argument(
        "--nfe-semantics",
        choices=NFE_SEMANTICS,
        default="model-evals",
        help="whether --nfe counts model forwards (guidance doubles them) or solver steps",
    )


# --- gen-data ---------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    workdir = Path(args.workdir)
    config = ToyCorpusConfig(
        n_samples=args.n_samples,
        n_speakers=args.n_speakers,
        alphabet_size=args.alphabet_size,
        feature_dim=args.feature_dim,
        noise_std=args.noise_std,
        n_words=args.n_words,
        rate_jitter=args.rate_jitter,
        seed=args.seed,
        split=args.split,
    )
    world = gen_corpus(config)
    out = _resolve(workdir, args.out)
    save_corpus(out, world)
    _write_run_meta(out / "run.meta", "gen-data", args)
    lengths = [s.feats.n_frames for s in world.samples]
    print(
        f"wrote {len(world.samples)} '{config.split}' samples to {out} "
        f"(frames: min {min(lengths)}, mean {np.mean(lengths):.1f}, max {max(lengths)})"
    )
    return 0


# --- train ------------------------------------------------------------------


def _cmd_train(args) -> int:
    workdir = Path(args.workdir)
    world = load_corpus(_resolve(workdir, args.corpus))
    backbone = BackboneConfig(
        vocab_size=world.vocab.size,
        feature_dim=world.config.feature_dim,
        char_embed_dim=args.char_embed_dim,
        embed_dim=args.embed_dim,
        ff_dim=args.ff_dim,
        layers=args.layers,
        heads=args.heads,
        position=args.position,
    )
    train_cfg = TrainConfig(
        total_updates=args.total_updates,
        warmup_updates=args.warmup_updates,
        peak_lr=args.peak_lr,
        frames_per_batch=args.frames_per_batch,
        max_sample_frames=args.max_sample_frames,
        mask_lo=args.mask_lo,
        mask_hi=args.mask_hi,
        cond_drop_prob=args.cond_drop_prob,
        sigma_min=args.sigma_min,
        x1_mode=args.x1,
        x2_sub_prob=args.x2_sub_prob,
        weight_decay=args.weight_decay,
        grad_clip=args.grad_clip,
        checkpoint_every=args.checkpoint_every,
        seed=args.seed,
    )
    out = _resolve(workdir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_run_meta(out / "run.meta", "train", args)
    model = build_field_model(backbone, args.seed)
    print(
        f"training {model.param_count} parameters on {len(world.samples)} samples "
        f"for {train_cfg.total_updates} updates"
    )
    every = max(1, train_cfg.total_updates // 100)

    def progress(record):
        if record["step"] % every == 0 or record["step"] == train_cfg.total_updates:
            print(
                f"update {record['step']}/{train_cfg.total_updates} "
                f"loss {record['loss']:.4f} lr {record['lr']:.2e}",
                flush=True,
            )

    metrics = train(
        world.samples,
        model,
        train_cfg,
        lexicon=world.lexicon,
        out_dir=out,
        progress=progress,
    )
    tail = [m["loss"] for m in metrics[-50:]]
    print(f"done; mean loss over final {len(tail)} updates: {np.mean(tail):.4f}")
    print(f"model checkpoint: {out / 'model.ckpt'}")
    return 0


# --- train-duration ---------------------------------------------------------


def _cmd_train_duration(args) -> int:
    workdir = Path(args.workdir)
    world = load_corpus(_resolve(workdir, args.corpus))
    config = DurationConfig(
        vocab_size=world.vocab.size,
        embed_dim=args.embed_dim,
        ff_dim=args.ff_dim,
        layers=args.layers,
        heads=args.heads,
    )
    train_cfg = DurationTrainConfig(
        total_updates=args.total_updates,
        batch_size=args.batch_size,
        peak_lr=args.peak_lr,
        warmup_updates=args.warmup_updates,
        drop_prompt_tokens_prob=args.drop_prompt_prob,
        seed=args.seed,
    )
    out = _resolve(workdir, args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_run_meta(out / "run.meta", "train-duration", args)
    model = build_duration_model(config, args.seed)
    pairs = [(s.transcript, s.alignment) for s in world.samples]
    metrics = train_duration(pairs, model, train_cfg)
    from .checkpoint import save_model

    save_model(out / "duration.ckpt", model)
    with open(out / "metrics.tsv", "w", encoding="utf-8") as fh:
        fh.write("step\tloss\tlr\twall_ms\n")
        for m in metrics:
            fh.write(f"{m['step']}\t{m['loss']!r}\t{m['lr']!r}\t{m['wall_ms']:.3f}\n")
    tail = [m["loss"] for m in metrics[-50:]]
    print(
        f"trained duration model ({model.param_count} params); "
        f"final MAE ~ {np.mean(tail):.2f} frames"
    )
    print(f"duration checkpoint: {out / 'duration.ckpt'}")
    return 0


# --- synth ------------------------------------------------------------------


def _cmd_synth(args) -> int:
    workdir = Path(args.workdir)
    model = _field_model(_resolve(workdir, args.model))
    world = load_corpus(_resolve(workdir, args.corpus))
    by_id = {s.id: s for s in world.samples}
    if args.prompt not in by_id:
        raise ConfigError(
            f"--prompt {args.prompt!r} not found in {args.corpus} "
            f"(corpus has ids like {world.samples[0].id!r})"
        )
    prompt = by_id[args.prompt]
    text = parse_markup(args.text, world.vocab)

    duration_model = None
    if args.duration_model:
        duration_model = _duration_model(_resolve(workdir, args.duration_model))
    gen_frames = args.duration
    if args.speech_rate is not None:
        if duration_model is None:
            raise ConfigError("--speech-rate needs --duration-model to set a base duration")
        base = predict_gen_frames(
            duration_model,
            None if args.x1 else prompt.transcript,
            prompt.feats.n_frames,
            text,
        )
        gen_frames = apply_speech_rate(base, args.speech_rate)
    if gen_frames is None and duration_model is None:
        raise ConfigError("pass --duration N, or --duration-model (optionally with --speech-rate)")

    request = SynthesisRequest(
        prompt_feats=prompt.feats,
        text=text,
        prompt_transcript=None if args.x1 else prompt.transcript,
        gen_frames=gen_frames,
        x1_mode=args.x1,
    )
    out_feats = synthesize(model, request, _sampler_config(args), duration_model)
    out_path = _resolve(workdir, args.out)
    write_features(out_path, out_feats)
    _write_run_meta(out_path.with_suffix(out_path.suffix + ".meta"), "synth", args)
    decoded = oracle_decode(out_feats, world)
    print(f"wrote {out_feats.n_frames} frames to {out_path}")
    print(f"decoded: {decoded.transcript.raw!r} (speaker offset id {decoded.speaker_id})")
    return 0


# --- eval -------------------------------------------------------------------


def _cmd_eval(args) -> int:
    workdir = Path(args.workdir)
    model = _field_model(_resolve(workdir, args.model))
    world = load_corpus(_resolve(workdir, args.corpus))
    duration_model = None
    if args.duration_model:
        duration_model = _duration_model(_resolve(workdir, args.duration_model))
    n = args.n or min(200, len(world.samples))
    cases = make_eval_cases(
        world,
        n,
        explicit_duration=duration_model is None,
        phoneme_sub_prob=args.phoneme_sub_prob,
        seed=args.seed,
    )
    records = evaluate_cases(
        model,
        world,
        cases,
        _sampler_config(args),
        duration_model=duration_model,
        x1_mode=args.x1,
        batch_size=args.batch_size,
    )
    summary = summarize_records(records)
    if args.out:
        out_path = _resolve(workdir, args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("case\tcer\tsim\tgen_frames\tdecoded\n")
            for r in records:
                fh.write(f"{r.case_index}\t{r.cer!r}\t{r.sim!r}\t{r.gen_frames}\t{r.decoded}\n")
        _write_run_meta(out_path.with_suffix(".meta"), "eval", args)
        print(f"wrote per-case records to {out_path}")
    print(
        f"n={summary['n']} CER={summary['mean_cer']:.4f} SIM={summary['mean_sim']:.4f}"
    )
    return 0


# --- sweep ------------------------------------------------------------------


def _cmd_sweep(args) -> int:
    workdir = Path(args.workdir)
    model = _field_model(_resolve(workdir, args.model))
    world = load_corpus(_resolve(workdir, args.corpus))
    n = args.n or min(50, len(world.samples))
    cases = make_eval_cases(world, n, explicit_duration=True, seed=args.seed)
    if args.kind == "prompt-length":
        rows = sweep_prompt_length(
            model, world, cases, _sampler_config(args), batch_size=args.batch_size
        )
        columns = ["fraction", "mean_prompt_frames", "n", "mean_cer", "mean_sim"]
    else:
        rows = sweep_speech_rate(
            model, world, cases, _sampler_config(args), batch_size=args.batch_size
        )
        columns = ["speech_rate", "lengths_exact", "n", "mean_cer", "mean_sim"]
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(row[c]) for c in columns))
    table = "\n".join(lines)
    if args.out:
        out_path = _resolve(workdir, args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(table + "\n", encoding="utf-8")
        _write_run_meta(out_path.with_suffix(".meta"), "sweep", args)
    print(table)
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> tuple[_Parser, dict]:
    parser = _Parser(prog="flowinfill", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flowinfill {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def new_command(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--workdir", default=".", help="base for relative paths")
        p.add_argument("--config", default=None, help="flat key = value defaults file")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = new_command("gen-data", _cmd_gen_data, help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="corpus directory to create")
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--n-speakers", type=int, default=10)
    p.add_argument("--alphabet-size", type=int, default=16)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--n-words", type=int, default=48)
    p.add_argument("--rate-jitter", type=float, default=0.12)
    p.add_argument("--split", default="train")

    p = new_command("train", _cmd_train, help="train the infilling model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="run directory for checkpoints/metrics")
    p.add_argument("--total-updates", type=int, default=20000)
    p.add_argument("--warmup-updates", type=int, default=500)
    p.add_argument("--peak-lr", type=float, default=1e-3)
    p.add_argument("--frames-per-batch", type=int, default=4096)
    p.add_argument("--max-sample-frames", type=int, default=512)
    p.add_argument("--mask-lo", type=float, default=0.7)
    p.add_argument("--mask-hi", type=float, default=1.0)
    p.add_argument("--cond-drop-prob", type=float, default=0.2)
    p.add_argument("--sigma-min", type=float, default=1e-5)
    p.add_argument("--x1", action="store_true", help="train without prompt transcripts")
    p.add_argument("--x2-sub-prob", type=float, default=0.0,
                   help="per-word phoneme substitution probability")
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--grad-clip", type=float, default=1.0)
    p.add_argument("--checkpoint-every", type=int, default=5000)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--ff-dim", type=int, default=640)
    p.add_argument("--char-embed-dim", type=int, default=64)
    p.add_argument("--position", choices=("rotary", "sinusoidal"), default="sinusoidal")

    p = new_command("train-duration", _cmd_train_duration, help="train the duration model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--total-updates", type=int, default=3000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--peak-lr", type=float, default=1e-3)
    p.add_argument("--warmup-updates", type=int, default=100)
    p.add_argument("--drop-prompt-prob", type=float, default=0.3)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--ff-dim", type=int, default=256)

    p = new_command("synth", _cmd_synth, help="synthesize features from a prompt")
    p.add_argument("--model", required=True, help="field model checkpoint")
    p.add_argument("--corpus", required=True, help="corpus directory with the prompt")
    p.add_argument("--prompt", required=True, help="prompt sample id")
    p.add_argument("--text", required=True, help="target text (markup allowed)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--duration", type=int, default=None, help="frames to generate")
    group.add_argument("--speech-rate", type=float, default=None,
                       help="rate multiplier applied to the duration model's estimate")
    p.add_argument("--duration-model", default=None, help="duration model checkpoint")
    p.add_argument("--x1", action="store_true", help="omit the prompt transcript")
    p.add_argument("--out", default="synth.bin")
    _add_sampler_flags(p)

    p = new_command("eval", _cmd_eval, help="CER/SIM over held-out prompt pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--duration-model", default=None,
                   help="use model durations instead of oracle durations")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--x1", action="store_true")
    p.add_argument("--phoneme-sub-prob", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--out", default=None, help="per-case records TSV")
    _add_sampler_flags(p)

    p = new_command("sweep", _cmd_sweep, help="prompt-length or speech-rate sweep")
    p.add_argument("kind", choices=("prompt-length", "speech-rate"))
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=25)
    p.add_argument("--out", default=None)
    _add_sampler_flags(p)

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    threads = os.environ.get("FLOWINFILL_THREADS")
    if threads:
        try:
            torch.set_num_threads(int(threads))
        except ValueError:
            print(f"error: FLOWINFILL_THREADS={threads!r} is not an integer", file=sys.stderr)
            return 1
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            config_path = Path(args.config)
            if not config_path.is_absolute():
                config_path = Path(args.workdir) / config_path
            values = read_kv(config_path)
            known = {a.dest for a in subparsers[args.command]._actions}
            defaults = {
                k: v for k, v in values.items()
                if k in known and k not in ("config", "workdir")
            }
            subparsers[args.command].set_defaults(**defaults)
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FlowinfillError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
