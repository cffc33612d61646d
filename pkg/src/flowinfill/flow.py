"""Conditional flow matching: probability path, target field, masked loss.

The path from noise to data is the optimal-transport one,

    x_t = t * x1 + (1 - (1 - sigma_min) * t) * x0,      x0 ~ N(0, I),

whose conditional target field is u_t(x | x1) = (x1 - (1 - sigma_min) * x) /
(1 - (1 - sigma_min) * t). On the path this reduces to x1 - (1 - sigma_min) * x0,
which is what the regression loss uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import NumericalError, ShapeMismatch, SingularFlowStep
from .features import FeatureSeq, SpanMask, broadcast_mask, hadamard
from .rng import RngStream
from .tokens import ExtendedCharSeq
from .validation import check_probability, check_unit_interval

DEFAULT_SIGMA_MIN = 1e-5

# Flow times stay at or below this, away from the path's singular endpoint.
T_MAX = 1.0 - 1e-5

_DENOM_EPS = 1e-7


@dataclass(frozen=True)
class CfmConfig:
    sigma_min: float = DEFAULT_SIGMA_MIN
    cond_drop_prob: float = 0.2
    t_max: float = T_MAX

    def __post_init__(self):
        check_unit_interval(self.sigma_min, "sigma_min", open_right=True)
        check_probability(self.cond_drop_prob, "cond_drop_prob")
        check_unit_interval(self.t_max, "t_max", open_right=True)


@dataclass(frozen=True)
class FlowPoint:
    t: float
    x_t: FeatureSeq
    x0: FeatureSeq
    x1: FeatureSeq


def sample_path(
    x1: FeatureSeq,
    t: float,
    rng: RngStream,
    sigma_min: float = DEFAULT_SIGMA_MIN,
) -> FlowPoint:
    """Draw x0 ~ N(0, I) and move it to time t along the path toward x1."""
    t = check_unit_interval(t, "t")
    x0 = rng.gen.standard_normal(x1.data.shape)
    x_t = t * x1.data + (1.0 - (1.0 - sigma_min) * t) * x0
    return FlowPoint(
        t=t,
        x_t=FeatureSeq(x_t, x1.frame_hop),
        x0=FeatureSeq(x0, x1.frame_hop),
        x1=x1,
    )


def target_field(
    x: FeatureSeq | np.ndarray,
    x1: FeatureSeq | np.ndarray,
    t: float,
    sigma_min: float = DEFAULT_SIGMA_MIN,
) -> np.ndarray:
    """Conditional target field u_t(x | x1) at an arbitrary point x."""
    x = x.data if isinstance(x, FeatureSeq) else np.asarray(x, dtype=np.float64)
    x1 = x1.data if isinstance(x1, FeatureSeq) else np.asarray(x1, dtype=np.float64)
    if x.shape != x1.shape:
        raise ShapeMismatch(f"x shape {x.shape} != x1 shape {x1.shape}")
    denom = 1.0 - (1.0 - sigma_min) * t
    if denom <= _DENOM_EPS:
        raise SingularFlowStep(
            f"flow time t={t} too close to 1 (denominator {denom:.3e})"
        )
    return (x1 - (1.0 - sigma_min) * x) / denom


def drop_conditions(
    audio_ctx: FeatureSeq,
    seq: ExtendedCharSeq,
    prob: float,
    rng: RngStream,
) -> tuple[FeatureSeq, ExtendedCharSeq, bool]:
    """Jointly blank both conditioning inputs with probability ``prob``.

    Always consumes one draw so that changing ``prob`` does not shift later
    draws from the same stream. Returns the (possibly blanked) pair and
    whether the drop fired.
    """
    prob = check_probability(prob, "prob")
    if audio_ctx.n_frames != len(seq):
        raise ShapeMismatch(
            f"audio context has {audio_ctx.n_frames} frames but the token "
            f"sequence has {len(seq)} entries"
        )
    fired = bool(rng.gen.random() < prob)
    if not fired:
        return audio_ctx, seq, False
    blank = FeatureSeq(np.zeros_like(audio_ctx.data), audio_ctx.frame_hop)
    return blank, seq.all_filler(), True


@dataclass(frozen=True)
class MaskedExample:
    """One training item: features, filler-extended tokens, and its span mask."""

    feats: FeatureSeq
    seq: ExtendedCharSeq
    mask: SpanMask

    def __post_init__(self):
        if not (self.feats.n_frames == len(self.seq) == self.mask.n_frames):
            raise ShapeMismatch(
                f"frames={self.feats.n_frames}, tokens={len(self.seq)}, "
                f"mask={self.mask.n_frames} must all agree"
            )


def cfm_loss(
    batch: list[MaskedExample],
    model,
    cfg: CfmConfig,
    noise_rng: RngStream,
    time_rng: RngStream | None = None,
    drop_rng: RngStream | None = None,
) -> torch.Tensor:
    """Masked flow-matching regression loss over a padded batch.

    Per item, in order: draw t ~ U[0, t_max] from the time stream, x0 from the
    noise stream, and the conditioning-drop coin from the dropout stream. The
    squared error is averaged over masked frame entries only, so the model's
    output on unmasked frames cannot affect the value.
    """
    if not batch:
        raise ValueError("batch must contain at least one example")
    time_rng = time_rng or noise_rng
    drop_rng = drop_rng or noise_rng
    dim = batch[0].feats.feature_dim
    lengths = [ex.feats.n_frames for ex in batch]
    t_pad = max(lengths)

    dtype = torch.float32
    get_params = getattr(model, "parameters", None)
    if callable(get_params):
        first = next(iter(get_params()), None)
        if first is not None:
            dtype = first.dtype

    n = len(batch)
    audio = torch.zeros(n, t_pad, dim, dtype=dtype)
    x_t = torch.zeros(n, t_pad, dim, dtype=dtype)
    target = torch.zeros(n, t_pad, dim, dtype=dtype)
    loss_mask = torch.zeros(n, t_pad, dtype=dtype)
    token_ids = torch.zeros(n, t_pad, dtype=torch.long)
    times = torch.zeros(n, dtype=dtype)

    for i, ex in enumerate(batch):
        if ex.feats.feature_dim != dim:
            raise ShapeMismatch("all batch items must share the feature dimension")
        t_i = float(time_rng.gen.uniform(0.0, cfg.t_max))
        x0 = noise_rng.gen.standard_normal(ex.feats.data.shape)
        ctx = hadamard(1.0 - broadcast_mask(ex.mask, dim), ex.feats)
        ctx, seq, _ = drop_conditions(ctx, ex.seq, cfg.cond_drop_prob, drop_rng)

        length = ex.feats.n_frames
        x_t_i = t_i * ex.feats.data + (1.0 - (1.0 - cfg.sigma_min) * t_i) * x0
        u_i = ex.feats.data - (1.0 - cfg.sigma_min) * x0
        audio[i, :length] = torch.from_numpy(ctx.data.T).to(dtype)
        x_t[i, :length] = torch.from_numpy(x_t_i.T).to(dtype)
        target[i, :length] = torch.from_numpy(u_i.T).to(dtype)
        loss_mask[i, :length] = torch.from_numpy(ex.mask.bits).to(dtype)
        token_ids[i, :length] = torch.from_numpy(seq.ids())
        times[i] = t_i

    lengths_t = torch.tensor(lengths, dtype=torch.long)
    pred = model(audio, x_t, token_ids, times, lengths_t)
    masked_entries = loss_mask.sum() * dim
    if masked_entries.item() == 0:
        raise ValueError("batch has no masked frames; nothing to regress on")
    sq = ((pred - target) * loss_mask.unsqueeze(-1)) ** 2
    loss = sq.sum() / masked_entries
    if not torch.isfinite(loss):
        raise NumericalError("flow-matching loss is non-finite")
    return loss


def cfm_loss_grads(
    batch: list[MaskedExample],
    model,
    cfg: CfmConfig,
    noise_rng: RngStream,
    time_rng: RngStream | None = None,
    drop_rng: RngStream | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value plus its exact gradient for every named parameter."""
    model.zero_grad(set_to_none=True)
    loss = cfm_loss(batch, model, cfg, noise_rng, time_rng, drop_rng)
    loss.backward()
    grads = {
        name: p.grad.detach().clone().numpy()
        for name, p in model.named_parameters()
        if p.grad is not None
    }
    return float(loss.item()), grads
