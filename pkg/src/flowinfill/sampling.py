"""ODE sampling of the learned field with classifier-free guidance.

Generation integrates dx/dt = v(t, x) from Gaussian noise at t=0 to just
below t=1 over the full window (prompt frames plus generation frames), then
returns the generated tail. Guidance always evaluates the conditional and
unconditional fields together, so one guided field evaluation costs two
model forwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import ConfigError, NumericalError, ShapeMismatch
from .features import FeatureSeq
from .flow import T_MAX
from .memory import release_heap
from .rng import SYNTH_NOISE, RngStream
from .text import Transcript, build_inference_seq, build_inference_seq_x1
from .validation import check_choice, check_positive_int, check_unit_interval

SOLVERS = ("euler", "midpoint")
NFE_SEMANTICS = ("model-evals", "solver-steps")


@dataclass(frozen=True)
class SamplerConfig:
    """How to integrate the field.

    ``nfe`` is a budget whose meaning is set by ``nfe_semantics``:
    "model-evals" (default) counts model forward passes, so with guidance a
    midpoint run at nfe=32 takes 8 steps (16 guided evaluations x 2 forwards);
    "solver-steps" counts integrator steps directly.
    """

    solver: str = "midpoint"
    nfe: int = 32
    cfg_alpha: float = 1.0
    seed: int = 0
    nfe_semantics: str = "model-evals"
    t_end: float = T_MAX

    def __post_init__(self):
        check_choice(self.solver, SOLVERS, "solver")
        check_choice(self.nfe_semantics, NFE_SEMANTICS, "nfe_semantics")
        check_positive_int(self.nfe, "nfe")
        check_unit_interval(self.t_end, "t_end", open_right=True)
        if not np.isfinite(self.cfg_alpha) or self.cfg_alpha < 0:
            raise ConfigError(f"cfg_alpha must be finite and >= 0, got {self.cfg_alpha}")


def euler_integrate(field, x0, nfe: int, t_end: float = 1.0):
    """Forward Euler from t=0 to t_end; nfe = field evaluations = steps."""
    nfe = check_positive_int(nfe, "nfe")
    h = t_end / nfe
    x = x0
    for i in range(nfe):
        x = x + h * field(i * h, x)
    return x


def midpoint_integrate(field, x0, nfe: int, t_end: float = 1.0):
    """Explicit midpoint from t=0 to t_end; nfe counts field evaluations.

    Each step evaluates the field twice, so nfe must be even and the step
    size is 2 * t_end / nfe.
    """
    nfe = check_positive_int(nfe, "nfe")
    if nfe % 2 != 0:
        raise ConfigError("midpoint integration needs an even evaluation budget")
    steps = nfe // 2
    h = t_end / steps
    x = x0
    for i in range(steps):
        t = i * h
        k1 = field(t, x)
        k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
        x = x + h * k2
    return x


def cfg_field(v_cond, v_uncond, alpha: float):
    """Guided field: v_cond + alpha * (v_cond - v_uncond)."""
    return v_cond + alpha * (v_cond - v_uncond)


class GuidedField:
    """Callable (t, x) -> guided field value from a two-branch model.

    ``model_fn(inputs, t, x)`` evaluates one branch; ``model_evals`` counts
    the forwards spent, two per call.
    """

    def __init__(self, model_fn, cond_inputs, uncond_inputs, alpha: float):
        self.model_fn = model_fn
        self.cond_inputs = cond_inputs
        self.uncond_inputs = uncond_inputs
        self.alpha = alpha
        self.model_evals = 0

    def __call__(self, t, x):
        v_cond = self.model_fn(self.cond_inputs, t, x)
        v_uncond = self.model_fn(self.uncond_inputs, t, x)
        self.model_evals += 2
        return cfg_field(v_cond, v_uncond, self.alpha)


def field_eval_budget(config: SamplerConfig) -> int:
    """Translate the nfe budget into the solver's field-evaluation count."""
    if config.nfe_semantics == "model-evals":
        if config.nfe % 2 != 0:
            raise ConfigError(
                "a model-evals budget must be even: every guided field "
                "evaluation spends two model forwards"
            )
        budget = config.nfe // 2
    else:
        budget = config.nfe if config.solver == "euler" else 2 * config.nfe
    if config.solver == "midpoint" and budget % 2 != 0:
        raise ConfigError(
            f"nfe={config.nfe} leaves an odd midpoint evaluation budget ({budget})"
        )
    return budget


def integrate(field, x0, config: SamplerConfig):
    budget = field_eval_budget(config)
    if config.solver == "euler":
        return euler_integrate(field, x0, budget, config.t_end)
    return midpoint_integrate(field, x0, budget, config.t_end)


@dataclass(frozen=True)
class SynthesisRequest:
    """One generation job: a prompt, target text, and a window size.

    ``gen_frames`` may be left None when a duration model supplies it.
    ``prompt_transcript`` is required unless ``x1_mode`` is set, in which case
    the token sequence carries no prompt text at all. ``noise_index`` selects
    the request's noise substream so batched and one-at-a-time synthesis of
    the same request agree.
    """

    prompt_feats: FeatureSeq
    text: Transcript
    prompt_transcript: Transcript | None = None
    gen_frames: int | None = None
    x1_mode: bool = False
    noise_index: int = 0

    def __post_init__(self):
        if not self.x1_mode and self.prompt_transcript is None:
            raise ConfigError(
                "prompt_transcript is required unless x1_mode is enabled"
            )
        if self.gen_frames is not None:
            check_positive_int(self.gen_frames, "gen_frames")
        if len(self.text) == 0:
            raise ConfigError("target text must contain at least one token")


def _resolve_gen_frames(request: SynthesisRequest, duration_model) -> int:
    if request.gen_frames is not None:
        return request.gen_frames
    if duration_model is None:
        raise ConfigError(
            "request has no gen_frames and no duration model was provided"
        )
    from .duration import predict_gen_frames

    return predict_gen_frames(
        duration_model,
        request.prompt_transcript,
        request.prompt_feats.n_frames,
        request.text,
    )


def _window_rows(model, request: SynthesisRequest, gen_frames: int):
    """Conditioning tensors for one request: (token ids, audio, total frames)."""
    d = model.config.feature_dim
    if request.prompt_feats.feature_dim != d:
        raise ShapeMismatch(
            f"prompt features have dim {request.prompt_feats.feature_dim}, "
            f"model expects {d}"
        )
    t_aud = request.prompt_feats.n_frames
    if request.x1_mode:
        seq = build_inference_seq_x1(request.text, t_aud, gen_frames)
    else:
        seq = build_inference_seq(
            request.prompt_transcript, request.text, t_aud, gen_frames
        )
    total = t_aud + gen_frames
    audio = np.zeros((d, total))
    audio[:, :t_aud] = request.prompt_feats.data
    return seq, audio, total


@torch.no_grad()
def synthesize_batch(
    model,
    requests: list[SynthesisRequest],
    config: SamplerConfig,
    duration_model=None,
) -> list[FeatureSeq]:
    """Generate every request jointly; each costs exactly the nfe budget.

    All requests share the solver schedule, so batching changes nothing but
    padding. Per request, the model forward runs ``config.nfe`` times under
    the default "model-evals" semantics.
    """
    if not requests:
        return []
    model.eval()
    d = model.config.feature_dim
    gen_frames = [_resolve_gen_frames(r, duration_model) for r in requests]
    rows = [_window_rows(model, r, g) for r, g in zip(requests, gen_frames)]
    totals = [total for _, _, total in rows]
    t_pad = max(totals)
    n = len(requests)

    token_ids = torch.zeros(2 * n, t_pad, dtype=torch.long)
    audio = torch.zeros(2 * n, t_pad, d)
    x = torch.zeros(n, t_pad, d)
    for i, ((seq, audio_np, total), req) in enumerate(zip(rows, requests)):
        token_ids[i, :total] = torch.from_numpy(seq.ids())
        audio[i, :total] = torch.from_numpy(audio_np.T).float()
        # rows n..2n-1 stay zero audio / all-filler tokens: the unconditional twin
        noise = RngStream(config.seed, SYNTH_NOISE).child(req.noise_index)
        x[i, :total] = torch.from_numpy(
            noise.gen.standard_normal((d, total)).T
        ).float()
    lengths = torch.tensor(totals + totals, dtype=torch.long)
    alpha = config.cfg_alpha

    def guided(t, xt):
        both = torch.cat([xt, xt], dim=0)
        tt = torch.full((2 * n,), float(t))
        out = model(audio, both, token_ids, tt, lengths)
        return cfg_field(out[:n], out[n:], alpha)

    final = integrate(guided, x, config)
    results = []
    for i, req in enumerate(requests):
        t_aud = req.prompt_feats.n_frames
        gen = final[i, t_aud : t_aud + gen_frames[i]]
        gen_np = gen.T.double().numpy()
        if not np.all(np.isfinite(gen_np)):
            raise NumericalError("synthesis produced non-finite features")
        results.append(FeatureSeq(gen_np, req.prompt_feats.frame_hop))
    release_heap()
    return results


def synthesize(
    model,
    request: SynthesisRequest,
    config: SamplerConfig,
    duration_model=None,
) -> FeatureSeq:
    """Generate one request; see :func:`synthesize_batch`."""
    return synthesize_batch(model, [request], config, duration_model)[0]
