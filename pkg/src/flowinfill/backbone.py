"""Transformer vector-field estimator with U-Net style skip connections.

The model consumes, per frame, the masked audio context, the flow state x_t,
and a learned token embedding, projects the stack to the model width, and
appends a flow-step embedding as one extra column after the last frame. The
second half of the blocks receives skip connections from the mirrored first
half through learned linear merges.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ConfigError, NumericalError, ShapeMismatch, VocabularyError
from .features import FeatureSeq
from .rng import PARAM_INIT, RngStream
from .tokens import ExtendedCharSeq

POSITION_POLICIES = ("rotary", "sinusoidal")


@dataclass(frozen=True)
class BackboneConfig:
    vocab_size: int
    feature_dim: int = 16
    char_embed_dim: int = 64
    embed_dim: int = 128
    ff_dim: int = 640
    layers: int = 4
    heads: int = 4
    position: str = "rotary"

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2 (filler plus content)")
        if min(self.feature_dim, self.char_embed_dim, self.embed_dim, self.ff_dim) < 1:
            raise ConfigError("all widths must be positive")
        if self.layers < 2 or self.layers % 2 != 0:
            raise ConfigError("layers must be even and >= 2 for mirrored skips")
        if self.embed_dim % self.heads != 0:
            raise ConfigError("embed_dim must be divisible by heads")
        if (self.embed_dim // self.heads) % 2 != 0:
            raise ConfigError("head dimension must be even for rotary positions")
        if self.position not in POSITION_POLICIES:
            raise ConfigError(f"position must be one of {POSITION_POLICIES}")

    def expected_param_count(self) -> int:
        """Closed-form parameter count; guards refactors of the architecture."""
        e, f = self.embed_dim, self.ff_dim
        tok = self.vocab_size * self.char_embed_dim
        in_proj = (2 * self.feature_dim + self.char_embed_dim) * e + e
        time_mlp = 2 * (e * e + e)
        block = 2 * e + (e * 3 * e + 3 * e) + (e * e + e) + 2 * e + (e * f + f) + (f * e + e)
        skips = (self.layers // 2) * (2 * e * e + e)
        head = 2 * e + (e * self.feature_dim + self.feature_dim)
        return tok + in_proj + time_mlp + self.layers * block + skips + head

    def to_dict(self) -> dict:
        return asdict(self)


def desk_config(vocab_size: int, feature_dim: int = 16) -> BackboneConfig:
    """Preset sized for CPU training (about one million parameters).

    Uses absolute positions: at this scale the text-to-frame alignment forms
    measurably faster when every column carries its own coordinate than under
    relative-only attention.
    """
    return BackboneConfig(
        vocab_size=vocab_size,
        feature_dim=feature_dim,
        char_embed_dim=64,
        embed_dim=128,
        ff_dim=640,
        layers=4,
        heads=4,
        position="sinusoidal",
    )


def full_scale_config(vocab_size: int, feature_dim: int = 100) -> BackboneConfig:
    """Production-scale preset (hundreds of millions of parameters).

    Provided for completeness; training it is far outside this package's
    CPU-sized test budget.
    """
    return BackboneConfig(
        vocab_size=vocab_size,
        feature_dim=feature_dim,
        char_embed_dim=512,
        embed_dim=1024,
        ff_dim=4096,
        layers=24,
        heads=16,
    )


def _rope_cache(n_pos: int, head_dim: int, dtype, device) -> tuple[torch.Tensor, torch.Tensor]:
    half = head_dim // 2
    inv_freq = 10000.0 ** (-torch.arange(half, dtype=torch.float64) / half)
    angles = torch.arange(n_pos, dtype=torch.float64)[:, None] * inv_freq[None, :]
    return (
        angles.cos().to(dtype=dtype, device=device),
        angles.sin().to(dtype=dtype, device=device),
    )


def _apply_rope(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    # x: [batch, heads, pos, head_dim]; cos/sin: [pos, head_dim/2]
    half = x.shape[-1] // 2
    x1, x2 = x[..., :half], x[..., half:]
    return torch.cat([x1 * cos - x2 * sin, x1 * sin + x2 * cos], dim=-1)


def _sinusoidal_columns(n_pos: int, dim: int, dtype, device) -> torch.Tensor:
    half = dim // 2
    inv_freq = 10000.0 ** (-torch.arange(half, dtype=torch.float64) / half)
    angles = torch.arange(n_pos, dtype=torch.float64)[:, None] * inv_freq[None, :]
    table = torch.cat([angles.sin(), angles.cos()], dim=-1)
    if table.shape[1] < dim:  # odd dim: pad the last column
        table = torch.cat([table, torch.zeros(n_pos, dim - table.shape[1], dtype=table.dtype)], dim=1)
    return table.to(dtype=dtype, device=device)


class _Block(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        e = config.embed_dim
        self.heads = config.heads
        self.head_dim = e // config.heads
        self.norm1 = nn.LayerNorm(e)
        self.qkv = nn.Linear(e, 3 * e)
        self.attn_out = nn.Linear(e, e)
        self.norm2 = nn.LayerNorm(e)
        self.ff1 = nn.Linear(e, config.ff_dim)
        self.ff2 = nn.Linear(config.ff_dim, e)
        self.rotary = config.position == "rotary"

    def forward(self, x: torch.Tensor, key_valid: torch.Tensor) -> torch.Tensor:
        b, t, e = x.shape
        h = self.norm1(x)
        qkv = self.qkv(h).view(b, t, 3, self.heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))
        if self.rotary:
            cos, sin = _rope_cache(t, self.head_dim, x.dtype, x.device)
            q = _apply_rope(q, cos, sin)
            k = _apply_rope(k, cos, sin)
        att = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        att = att.masked_fill(~key_valid[:, None, None, :], float("-inf"))
        att = att.softmax(dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, e)
        x = x + self.attn_out(out)
        x = x + self.ff2(F.gelu(self.ff1(self.norm2(x))))
        return x


class FieldModel(nn.Module):
    """Estimates the flow field for every frame of a conditioned window."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        e = config.embed_dim
        self.token_embed = nn.Embedding(config.vocab_size, config.char_embed_dim)
        self.input_proj = nn.Linear(2 * config.feature_dim + config.char_embed_dim, e)
        self.time_fc1 = nn.Linear(e, e)
        self.time_fc2 = nn.Linear(e, e)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.layers))
        self.skip_projs = nn.ModuleList(
            nn.Linear(2 * e, e) for _ in range(config.layers // 2)
        )
        self.out_norm = nn.LayerNorm(e)
        self.out_proj = nn.Linear(e, config.feature_dim)

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def time_embedding(self, t: torch.Tensor) -> torch.Tensor:
        """Flow-step embedding: sinusoidal features of t through a small MLP."""
        e = self.config.embed_dim
        half = e // 2
        freqs = torch.exp(
            torch.linspace(0.0, math.log(1000.0), half, dtype=torch.float64)
        ).to(dtype=t.dtype, device=t.device)
        angles = t[:, None] * freqs[None, :]
        feats = torch.cat([angles.sin(), angles.cos()], dim=-1)
        return self.time_fc2(F.gelu(self.time_fc1(feats)))

    def _trunk(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        if self.config.position == "sinusoidal":
            x = x + _sinusoidal_columns(x.shape[1], x.shape[2], x.dtype, x.device)
        half = self.config.layers // 2
        early: list[torch.Tensor] = []
        for block in self.blocks[:half]:
            x = block(x, valid)
            early.append(x)
        for i, block in enumerate(self.blocks[half:]):
            skip = early[half - 1 - i]
            x = self.skip_projs[i](torch.cat([x, skip], dim=-1))
            x = block(x, valid)
        return self.out_norm(x)

    def forward(
        self,
        audio_ctx: torch.Tensor,
        x_t: torch.Tensor,
        token_ids: torch.Tensor,
        t: torch.Tensor,
        lengths: torch.Tensor,
    ) -> torch.Tensor:
        """Batched field estimate.

        audio_ctx, x_t: [batch, frames, feature_dim]; token_ids: [batch, frames];
        t: [batch]; lengths: [batch] true frame counts. Positions at or beyond a
        sample's length are padding except that the flow-step embedding occupies
        position lengths[i]. Returns [batch, frames, feature_dim]; entries beyond
        a sample's length are unspecified.
        """
        b, t_pad, _ = audio_ctx.shape
        if token_ids.shape != (b, t_pad):
            raise ShapeMismatch("token_ids must match the frame grid")
        if int(token_ids.max()) >= self.config.vocab_size:
            raise VocabularyError("token id outside the model's vocabulary")
        if bool((lengths > t_pad).any()):
            raise ShapeMismatch("a declared length exceeds the padded frame count")
        y_emb = self.token_embed(token_ids)
        cols = self.input_proj(torch.cat([audio_ctx, x_t, y_emb], dim=-1))
        x = torch.zeros(b, t_pad + 1, self.config.embed_dim, dtype=cols.dtype)
        x[:, :t_pad] = cols
        rows = torch.arange(b)
        x[rows, lengths] = self.time_embedding(t)
        positions = torch.arange(t_pad + 1)
        valid = positions[None, :] <= lengths[:, None]
        h = self._trunk(x, valid)
        out = self.out_proj(h[:, :t_pad])
        if not torch.isfinite(out[valid[:, :t_pad]]).all():
            raise NumericalError("non-finite activations in the field model")
        return out

    # -- single-sequence views used by the sampler and in tests ------------

    def embed_text(self, seq: ExtendedCharSeq) -> np.ndarray:
        """Token embeddings as an (char_embed_dim, T) matrix."""
        ids = seq.ids()
        if ids.size and ids.max() >= self.config.vocab_size:
            raise VocabularyError("token id outside the model's vocabulary")
        with torch.no_grad():
            emb = self.token_embed(torch.from_numpy(ids))
        return emb.T.double().numpy()

    def assemble_input(
        self,
        audio_ctx: FeatureSeq,
        x_t: FeatureSeq,
        y_emb: np.ndarray,
        t: float,
    ) -> np.ndarray:
        """Stack, project, and append the flow-step column: (embed_dim, T+1)."""
        d = self.config.feature_dim
        n = audio_ctx.n_frames
        if audio_ctx.feature_dim != d or x_t.feature_dim != d:
            raise ShapeMismatch(f"audio context and x_t must both have dim {d}")
        if x_t.n_frames != n or y_emb.shape != (self.config.char_embed_dim, n):
            raise ShapeMismatch("audio context, x_t, and embeddings must share T")
        dtype = next(self.parameters()).dtype
        stack = np.concatenate([audio_ctx.data, x_t.data, y_emb], axis=0)
        with torch.no_grad():
            cols = self.input_proj(torch.from_numpy(stack.T).to(dtype))
            t_col = self.time_embedding(torch.tensor([t], dtype=dtype))
            assembled = torch.cat([cols, t_col], dim=0)
        return assembled.double().numpy().T

    def forward_assembled(self, assembled: np.ndarray) -> np.ndarray:
        """Run the trunk on one assembled (embed_dim, T+1) matrix, giving (D, T)."""
        e = self.config.embed_dim
        if assembled.ndim != 2 or assembled.shape[0] != e or assembled.shape[1] < 1:
            raise ShapeMismatch(
                f"assembled input must be ({e}, T+1), got {assembled.shape}"
            )
        dtype = next(self.parameters()).dtype
        with torch.no_grad():
            x = torch.from_numpy(assembled.T).to(dtype)[None]
            valid = torch.ones(1, x.shape[1], dtype=torch.bool)
            h = self._trunk(x, valid)
            out = self.out_proj(h[:, :-1])
        out_np = out[0].T.double().numpy()
        if not np.all(np.isfinite(out_np)):
            raise NumericalError("non-finite activations in the field model")
        return out_np


def build_field_model(config: BackboneConfig, seed: int) -> FieldModel:
    """Construct a model with reproducible parameter initialization."""
    torch.manual_seed(RngStream(seed, PARAM_INIT).bits63())
    return FieldModel(config)
