"""Training loop: masking, extended sequences, masked flow loss, AdamW.

Batches are packed by frame budget from a shuffled (window-sorted) order, the
learning rate ramps linearly to a peak and decays linearly to zero, and every
update appends one metrics record. Checkpoints are written periodically and at
the end; a non-finite loss aborts with a diagnostic checkpoint.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from .checkpoint import save_model
from .exceptions import ConfigError, NumericalError
from .flow import CfmConfig, MaskedExample, cfm_loss
from .masking import sample_mask, sample_word_mask, word_alignment
from .memory import release_heap
from .rng import BATCH_ORDER, DROPOUT, FLOW_TIME, MASK, NOISE, X2_SUBST, RngStream
from .text import build_training_seq, substitute_phonemes
from .validation import (
    check_fraction_range,
    check_non_negative_int,
    check_positive,
    check_positive_int,
    check_probability,
)

METRICS_COLUMNS = ("step", "loss", "lr", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    total_updates: int = 20000
    warmup_updates: int = 500
    peak_lr: float = 1e-3
    frames_per_batch: int = 4096
    max_sample_frames: int = 512
    mask_lo: float = 0.7
    mask_hi: float = 1.0
    cond_drop_prob: float = 0.2
    sigma_min: float = 1e-5
    x1_mode: bool = False
    x2_sub_prob: float = 0.0
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    sort_window: int = 64
    checkpoint_every: int = 5000
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.total_updates, "total_updates")
        check_non_negative_int(self.warmup_updates, "warmup_updates")
        if self.warmup_updates >= self.total_updates:
            raise ConfigError("warmup_updates must be < total_updates")
        check_positive(self.peak_lr, "peak_lr")
        check_positive_int(self.frames_per_batch, "frames_per_batch")
        check_positive_int(self.max_sample_frames, "max_sample_frames")
        check_fraction_range(self.mask_lo, self.mask_hi, "mask fraction range")
        check_probability(self.cond_drop_prob, "cond_drop_prob")
        check_probability(self.x2_sub_prob, "x2_sub_prob")
        check_positive_int(self.sort_window, "sort_window")
        check_positive_int(self.checkpoint_every, "checkpoint_every")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        return cls(**values)


def lr_at(step: int, config) -> float:
    """Piecewise-linear schedule: 0 -> peak over the warmup, then -> 0."""
    total = config.total_updates
    warmup = config.warmup_updates
    if not 0 <= step <= total:
        raise ConfigError(f"step {step} outside [0, {total}]")
    if warmup > 0 and step <= warmup:
        return config.peak_lr * step / warmup
    return config.peak_lr * (total - step) / max(1, total - warmup)


def filter_samples(samples: list, max_frames: int) -> list:
    """Drop samples strictly longer than the frame cap."""
    check_positive_int(max_frames, "max_frames")
    return [s for s in samples if s.feats.n_frames <= max_frames]


def epoch_batches(
    samples: list,
    frames_per_batch: int,
    rng: RngStream,
    sort_window: int = 64,
) -> list[list]:
    """One epoch of frame-budgeted batches over a shuffled sample order.

    The shuffled order is sorted inside fixed-size windows so batch mates have
    similar lengths (less padding) while the global order stays random. Every
    batch stays within the budget and, except possibly the last of the epoch,
    holds at least (budget - longest_sample) frames.
    """
    if not samples:
        raise ConfigError("cannot batch an empty sample list")
    longest = max(s.feats.n_frames for s in samples)
    if longest > frames_per_batch:
        raise ConfigError(
            f"longest sample ({longest} frames) exceeds the batch budget "
            f"({frames_per_batch}); filter the corpus first"
        )
    perm = rng.gen.permutation(len(samples))
    order: list[int] = []
    for i in range(0, len(perm), sort_window):
        window = sorted(perm[i : i + sort_window], key=lambda j: samples[j].feats.n_frames)
        order.extend(int(j) for j in window)
    batches: list[list] = []
    current: list = []
    current_frames = 0
    for j in order:
        frames = samples[j].feats.n_frames
        if current and current_frames + frames > frames_per_batch:
            batches.append(current)
            current, current_frames = [], 0
        current.append(samples[j])
        current_frames += frames
    if current:
        batches.append(current)
    return batches


def _prepare_example(
    sample,
    config: TrainConfig,
    word_aligns: dict,
    lexicon,
    mask_rng: RngStream,
    x2_rng: RngStream,
) -> MaskedExample:
    transcript = sample.transcript
    if config.x2_sub_prob > 0:
        substituted = substitute_phonemes(
            transcript, lexicon, config.x2_sub_prob, x2_rng
        )
        if config.x1_mode and len(substituted) != len(transcript):
            raise ConfigError(
                "word-snapped masking needs length-preserving phoneme substitution"
            )
        transcript = substituted
    frames = sample.feats.n_frames
    if config.x1_mode:
        mask, masked_transcript = sample_word_mask(
            frames,
            word_aligns[sample.id],
            transcript,
            config.mask_lo,
            config.mask_hi,
            mask_rng,
        )
        seq = build_training_seq(masked_transcript, frames)
    else:
        mask = sample_mask(frames, config.mask_lo, config.mask_hi, mask_rng)
        seq = build_training_seq(transcript, frames)
    return MaskedExample(feats=sample.feats, seq=seq, mask=mask)


def train(
    samples: list,
    model,
    config: TrainConfig,
    lexicon=None,
    out_dir=None,
    progress=None,
) -> list[dict]:
    """Run the full schedule; returns one metrics record per update.

    ``out_dir``, when given, receives ``metrics.tsv`` (appended as training
    runs) and a ``checkpoints/`` series plus ``model.ckpt`` at the end.
    ``progress`` is an optional callable invoked with each metrics record.
    """
    if config.x2_sub_prob > 0 and lexicon is None:
        raise ConfigError("phoneme substitution requires a lexicon")
    usable = filter_samples(samples, config.max_sample_frames)
    if not usable:
        raise ConfigError("no samples under max_sample_frames; nothing to train on")

    word_aligns = {}
    if config.x1_mode:
        for sample in usable:
            if not sample.transcript.word_spans:
                raise ConfigError(f"sample {sample.id} has no words to mask")
            word_aligns[sample.id] = word_alignment(sample.transcript, sample.alignment)

    cfm_cfg = CfmConfig(
        sigma_min=config.sigma_min, cond_drop_prob=config.cond_drop_prob
    )
    mask_rng = RngStream(config.seed, MASK)
    noise_rng = RngStream(config.seed, NOISE)
    time_rng = RngStream(config.seed, FLOW_TIME)
    drop_rng = RngStream(config.seed, DROPOUT)
    order_rng = RngStream(config.seed, BATCH_ORDER)
    x2_rng = RngStream(config.seed, X2_SUBST)

    optim = torch.optim.AdamW(
        model.parameters(),
        lr=config.peak_lr,
        betas=(0.9, 0.98),
        eps=1e-8,
        weight_decay=config.weight_decay,
    )

    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_dir / "metrics.tsv", "w", encoding="utf-8")
        metrics_fh.write("\t".join(METRICS_COLUMNS) + "\n")

    metrics: list[dict] = []
    step = 0
    model.train()
    try:
        while step < config.total_updates:
            for batch in epoch_batches(
                usable, config.frames_per_batch, order_rng, config.sort_window
            ):
                if step >= config.total_updates:
                    break
                step += 1
                started = time.perf_counter()
                examples = [
                    _prepare_example(
                        s, config, word_aligns, lexicon, mask_rng, x2_rng
                    )
                    for s in batch
                ]
                try:
                    loss = cfm_loss(
                        examples, model, cfm_cfg, noise_rng, time_rng, drop_rng
                    )
                except NumericalError:
                    if out_dir is not None:
                        save_model(out_dir / "diverged.ckpt", model)
                    raise
                lr = lr_at(step, config)
                for group in optim.param_groups:
                    group["lr"] = lr
                optim.zero_grad(set_to_none=True)
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optim.step()
                record = {
                    "step": step,
                    "loss": float(loss.item()),
                    "lr": lr,
                    "wall_ms": (time.perf_counter() - started) * 1e3,
                }
                metrics.append(record)
                if metrics_fh is not None:
                    metrics_fh.write(
                        f"{record['step']}\t{record['loss']!r}\t"
                        f"{record['lr']!r}\t{record['wall_ms']:.3f}\n"
                    )
                    if step % 50 == 0:
                        metrics_fh.flush()
                if progress is not None:
                    progress(record)
                if out_dir is not None and (
                    step % config.checkpoint_every == 0
                    or step == config.total_updates
                ):
                    save_model(
                        out_dir / "checkpoints" / f"ckpt-{step:06d}.ckpt", model
                    )
                release_heap()
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    if out_dir is not None:
        save_model(out_dir / "model.ckpt", model)
    model.eval()
    return metrics
