"""Regression of total utterance duration from prompt evidence and text.

A small transformer encoder reads the prompt tokens (segment 0), the target
text tokens (segment 1), and a prompt-frame-count feature column, and
predicts the total frame count of the whole utterance. The generated-part
duration is that total minus the prompt frames. Training minimizes mean
absolute error on total frames.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import BackboneConfig, _Block
from .exceptions import ConfigError, NumericalError
from .masking import Alignment
from .memory import release_heap
from .rng import DURATION_SPLIT, PARAM_INIT, RngStream
from .text import Transcript
from .tokens import Token
from .validation import (
    check_non_negative_int,
    check_positive,
    check_positive_int,
    check_probability,
)


@dataclass(frozen=True)
class DurationConfig:
    vocab_size: int
    embed_dim: int = 64
    ff_dim: int = 256
    layers: int = 2
    heads: int = 2

    def __post_init__(self):
        check_positive_int(self.vocab_size, "vocab_size")
        check_positive_int(self.layers, "layers")
        if self.embed_dim % self.heads != 0:
            raise ConfigError("embed_dim must be divisible by heads")
        if (self.embed_dim // self.heads) % 2 != 0:
            raise ConfigError("head dimension must be even for rotary positions")

    def to_dict(self) -> dict:
        return asdict(self)

    def _block_config(self) -> BackboneConfig:
        return BackboneConfig(
            vocab_size=max(self.vocab_size, 2),
            feature_dim=1,
            char_embed_dim=1,
            embed_dim=self.embed_dim,
            ff_dim=self.ff_dim,
            layers=2,
            heads=self.heads,
        )


class DurationModel(nn.Module):
    def __init__(self, config: DurationConfig):
        super().__init__()
        self.config = config
        e = config.embed_dim
        self.token_embed = nn.Embedding(config.vocab_size, e)
        self.segment_embed = nn.Embedding(2, e)
        # prompt frame count enters as [frames / 100, log1p(frames)]
        self.frame_feat = nn.Linear(2, e)
        block_cfg = config._block_config()
        self.blocks = nn.ModuleList(_Block(block_cfg) for _ in range(config.layers))
        self.out_norm = nn.LayerNorm(e)
        self.head = nn.Linear(e, 1)

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(
        self,
        token_ids: torch.Tensor,
        segments: torch.Tensor,
        prompt_frames: torch.Tensor,
        lengths: torch.Tensor,
    ) -> torch.Tensor:
        """Predict total frames: token_ids/segments [B, L], returns [B]."""
        b, l_pad = token_ids.shape
        emb = self.token_embed(token_ids) + self.segment_embed(segments)
        feats = torch.stack(
            [prompt_frames / 100.0, torch.log1p(prompt_frames)], dim=-1
        )
        summary = self.frame_feat(feats)[:, None, :]
        x = torch.cat([summary, emb], dim=1)
        positions = torch.arange(l_pad + 1)
        valid = positions[None, :] <= lengths[:, None]
        for block in self.blocks:
            x = block(x, valid)
        x = self.out_norm(x)
        # Sum pooling, not mean: the target grows with token count, and a
        # mean collapses count information that attention alone recovers
        # too slowly to be usable.
        pooled = (x * valid[..., None]).sum(dim=1)
        return F.softplus(self.head(pooled).squeeze(-1))


def build_duration_model(config: DurationConfig, seed: int) -> DurationModel:
    torch.manual_seed(RngStream(seed, PARAM_INIT).child(1).bits63())
    return DurationModel(config)


def _encode(
    prompt_tokens: tuple[Token, ...],
    text_tokens: tuple[Token, ...],
) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([t.id for t in prompt_tokens + text_tokens], dtype=np.int64)
    segments = np.array(
        [0] * len(prompt_tokens) + [1] * len(text_tokens), dtype=np.int64
    )
    return ids, segments


@torch.no_grad()
def predict_total_frames(
    model: DurationModel,
    prompt_transcript: Transcript | None,
    prompt_frames: int,
    text: Transcript,
) -> float:
    check_non_negative_int(prompt_frames, "prompt_frames")
    if len(text) == 0:
        raise ConfigError("text must contain at least one token")
    model.eval()
    prompt_tokens = prompt_transcript.tokens if prompt_transcript is not None else ()
    ids, segments = _encode(prompt_tokens, text.tokens)
    pred = model(
        torch.from_numpy(ids)[None],
        torch.from_numpy(segments)[None],
        torch.tensor([float(prompt_frames)]),
        torch.tensor([len(ids)], dtype=torch.long),
    )
    value = float(pred.item())
    if not np.isfinite(value):
        raise NumericalError("duration model produced a non-finite prediction")
    return value


def predict_gen_frames(
    model: DurationModel,
    prompt_transcript: Transcript | None,
    prompt_frames: int,
    text: Transcript,
) -> int:
    """Frames to generate: predicted total minus the prompt, at least 1."""
    total = predict_total_frames(model, prompt_transcript, prompt_frames, text)
    return max(1, int(round(total)) - prompt_frames)


def apply_speech_rate(gen_frames: int, speech_rate: float) -> int:
    """Rescale a duration: rate > 1 speaks faster, so fewer frames."""
    check_positive_int(gen_frames, "gen_frames")
    check_positive(speech_rate, "speech_rate")
    return max(1, int(round(gen_frames / speech_rate)))


@dataclass(frozen=True)
class DurationTrainConfig:
    total_updates: int = 3000
    batch_size: int = 64
    peak_lr: float = 1e-3
    warmup_updates: int = 100
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    drop_prompt_tokens_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.total_updates, "total_updates")
        check_positive_int(self.batch_size, "batch_size")
        check_positive(self.peak_lr, "peak_lr")
        check_non_negative_int(self.warmup_updates, "warmup_updates")
        if self.warmup_updates >= self.total_updates:
            raise ConfigError("warmup_updates must be < total_updates")
        check_probability(self.drop_prompt_tokens_prob, "drop_prompt_tokens_prob")

    def to_dict(self) -> dict:
        return asdict(self)


def train_duration(
    pairs: list[tuple[Transcript, Alignment]],
    model: DurationModel,
    config: DurationTrainConfig,
) -> list[dict]:
    """Fit on random prompt/text splits of aligned transcripts.

    Each training example splits an utterance at a token boundary; with some
    probability the prompt tokens are hidden (frame count kept) so the model
    also learns transcript-free prompts. Returns per-update metric records.
    """
    from .training import lr_at

    if not pairs:
        raise ConfigError("no training pairs")
    usable = [(t, a) for t, a in pairs if len(t) >= 2]
    if not usable:
        raise ConfigError("every transcript is shorter than two tokens")
    split_rng = RngStream(config.seed, DURATION_SPLIT)
    optim = torch.optim.AdamW(
        model.parameters(),
        lr=config.peak_lr,
        betas=(0.9, 0.98),
        eps=1e-8,
        weight_decay=config.weight_decay,
    )
    schedule_cfg = _ScheduleView(
        config.total_updates, config.warmup_updates, config.peak_lr
    )
    metrics: list[dict] = []
    model.train()
    for step in range(1, config.total_updates + 1):
        started = time.perf_counter()
        idx = split_rng.gen.integers(0, len(usable), size=config.batch_size)
        rows = []
        for j in idx:
            transcript, align = usable[int(j)]
            k = int(split_rng.gen.integers(1, len(transcript)))
            t_aud = align.spans[k].start
            prompt_tokens = transcript.tokens[:k]
            if split_rng.gen.random() < config.drop_prompt_tokens_prob:
                prompt_tokens = ()
            ids, segments = _encode(prompt_tokens, transcript.tokens[k:])
            rows.append((ids, segments, t_aud, align.n_frames))
        l_pad = max(len(r[0]) for r in rows)
        n = len(rows)
        token_ids = torch.zeros(n, l_pad, dtype=torch.long)
        segments = torch.zeros(n, l_pad, dtype=torch.long)
        lengths = torch.zeros(n, dtype=torch.long)
        prompt_frames = torch.zeros(n)
        targets = torch.zeros(n)
        for i, (ids, segs, t_aud, total) in enumerate(rows):
            token_ids[i, : len(ids)] = torch.from_numpy(ids)
            segments[i, : len(segs)] = torch.from_numpy(segs)
            lengths[i] = len(ids)
            prompt_frames[i] = float(t_aud)
            targets[i] = float(total)
        pred = model(token_ids, segments, prompt_frames, lengths)
        loss = (pred - targets).abs().mean()
        if not torch.isfinite(loss):
            raise NumericalError(f"duration loss non-finite at update {step}")
        lr = lr_at(step, schedule_cfg)
        for group in optim.param_groups:
            group["lr"] = lr
        optim.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        optim.step()
        metrics.append(
            {
                "step": step,
                "loss": float(loss.item()),
                "lr": lr,
                "wall_ms": (time.perf_counter() - started) * 1e3,
            }
        )
        if step % 100 == 0:
            release_heap()
    model.eval()
    return metrics


@dataclass(frozen=True)
class _ScheduleView:
    """Adapter exposing the fields the shared LR schedule reads."""

    total_updates: int
    warmup_updates: int
    peak_lr: float
