"""Estimator facade in the scikit-learn style.

``SpectrogramInfiller`` wraps model construction, training, and sampling
behind fit/predict; ``DurationRegressor`` does the same for the duration
model. Constructor arguments are stored verbatim (get_params/set_params work
as usual) and all learned state lives in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .backbone import BackboneConfig, build_field_model
from .checkpoint import load_model, save_model
from .duration import (
    DurationConfig,
    DurationTrainConfig,
    build_duration_model,
    predict_gen_frames,
    train_duration,
)
from .exceptions import ConfigError
from .sampling import SamplerConfig, SynthesisRequest, synthesize_batch
from .toybench import ToyCorpus
from .training import TrainConfig, train


def _require_corpus(corpus) -> ToyCorpus:
    if not isinstance(corpus, ToyCorpus):
        raise ConfigError(
            "fit expects a ToyCorpus (samples plus vocabulary and lexicon); "
            "see gen_corpus or load_corpus"
        )
    if not corpus.samples:
        raise ConfigError("the corpus has no samples")
    return corpus


class SpectrogramInfiller(BaseEstimator):
    """Text-conditioned feature infiller: fit on a corpus, predict features."""

    def __init__(
        self,
        layers: int = 4,
        heads: int = 4,
        embed_dim: int = 128,
        ff_dim: int = 640,
        char_embed_dim: int = 64,
        position: str = "sinusoidal",
        total_updates: int = 20000,
        warmup_updates: int = 500,
        peak_lr: float = 1e-3,
        frames_per_batch: int = 4096,
        max_sample_frames: int = 512,
        mask_lo: float = 0.7,
        mask_hi: float = 1.0,
        cond_drop_prob: float = 0.2,
        sigma_min: float = 1e-5,
        x1_mode: bool = False,
        x2_sub_prob: float = 0.0,
        weight_decay: float = 0.01,
        grad_clip: float = 1.0,
        solver: str = "midpoint",
        nfe: int = 32,
        cfg_alpha: float = 1.0,
        seed: int = 0,
    ):
        self.layers = layers
        self.heads = heads
        self.embed_dim = embed_dim
        self.ff_dim = ff_dim
        self.char_embed_dim = char_embed_dim
        self.position = position
        self.total_updates = total_updates
        self.warmup_updates = warmup_updates
        self.peak_lr = peak_lr
        self.frames_per_batch = frames_per_batch
        self.max_sample_frames = max_sample_frames
        self.mask_lo = mask_lo
        self.mask_hi = mask_hi
        self.cond_drop_prob = cond_drop_prob
        self.sigma_min = sigma_min
        self.x1_mode = x1_mode
        self.x2_sub_prob = x2_sub_prob
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.solver = solver
        self.nfe = nfe
        self.cfg_alpha = cfg_alpha
        self.seed = seed

    # -- sklearn plumbing ---------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this SpectrogramInfiller is not fitted yet; call fit first"
            )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            total_updates=self.total_updates,
            warmup_updates=self.warmup_updates,
            peak_lr=self.peak_lr,
            frames_per_batch=self.frames_per_batch,
            max_sample_frames=self.max_sample_frames,
            mask_lo=self.mask_lo,
            mask_hi=self.mask_hi,
            cond_drop_prob=self.cond_drop_prob,
            sigma_min=self.sigma_min,
            x1_mode=self.x1_mode,
            x2_sub_prob=self.x2_sub_prob,
            weight_decay=self.weight_decay,
            grad_clip=self.grad_clip,
            seed=self.seed,
        )

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            solver=self.solver,
            nfe=self.nfe,
            cfg_alpha=self.cfg_alpha,
            seed=self.seed,
        )

    # -- estimator API --------------------------------------------------------

    def fit(self, corpus, y=None, out_dir=None, progress=None):
        corpus = _require_corpus(corpus)
        backbone = BackboneConfig(
            vocab_size=corpus.vocab.size,
            feature_dim=corpus.config.feature_dim,
            char_embed_dim=self.char_embed_dim,
            embed_dim=self.embed_dim,
            ff_dim=self.ff_dim,
            layers=self.layers,
            heads=self.heads,
            position=self.position,
        )
        self.model_ = build_field_model(backbone, self.seed)
        self.metrics_ = train(
            corpus.samples,
            self.model_,
            self._train_config(),
            lexicon=corpus.lexicon,
            out_dir=out_dir,
            progress=progress,
        )
        return self

    def predict(self, requests: list[SynthesisRequest], duration_model=None):
        """Generate features for each request; returns a list of FeatureSeq."""
        self._check_fitted()
        return synthesize_batch(
            self.model_, list(requests), self.sampler_config(), duration_model
        )

    synthesize = predict

    def save(self, path) -> None:
        self._check_fitted()
        save_model(path, self.model_)

    def load_weights(self, path):
        """Adopt a trained checkpoint instead of fitting."""
        self.model_ = load_model(path)
        self.metrics_ = []
        return self


class DurationRegressor(BaseEstimator):
    """Predicts how many frames generated speech should occupy."""

    def __init__(
        self,
        embed_dim: int = 64,
        ff_dim: int = 256,
        layers: int = 2,
        heads: int = 2,
        total_updates: int = 3000,
        batch_size: int = 64,
        peak_lr: float = 1e-3,
        warmup_updates: int = 100,
        weight_decay: float = 0.01,
        drop_prompt_tokens_prob: float = 0.3,
        seed: int = 0,
    ):
        self.embed_dim = embed_dim
        self.ff_dim = ff_dim
        self.layers = layers
        self.heads = heads
        self.total_updates = total_updates
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.warmup_updates = warmup_updates
        self.weight_decay = weight_decay
        self.drop_prompt_tokens_prob = drop_prompt_tokens_prob
        self.seed = seed

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this DurationRegressor is not fitted yet; call fit first"
            )

    def fit(self, corpus, y=None):
        corpus = _require_corpus(corpus)
        config = DurationConfig(
            vocab_size=corpus.vocab.size,
            embed_dim=self.embed_dim,
            ff_dim=self.ff_dim,
            layers=self.layers,
            heads=self.heads,
        )
        self.model_ = build_duration_model(config, self.seed)
        self.metrics_ = train_duration(
            [(s.transcript, s.alignment) for s in corpus.samples],
            self.model_,
            DurationTrainConfig(
                total_updates=self.total_updates,
                batch_size=self.batch_size,
                peak_lr=self.peak_lr,
                warmup_updates=self.warmup_updates,
                weight_decay=self.weight_decay,
                drop_prompt_tokens_prob=self.drop_prompt_tokens_prob,
                seed=self.seed,
            ),
        )
        return self

    def predict(self, jobs) -> np.ndarray:
        """Frames to generate for (prompt_transcript, prompt_frames, text) triples."""
        self._check_fitted()
        out = [
            predict_gen_frames(self.model_, prompt, int(frames), text)
            for prompt, frames, text in jobs
        ]
        return np.array(out, dtype=np.int64)

    def save(self, path) -> None:
        self._check_fitted()
        save_model(path, self.model_)

    def load_weights(self, path):
        self.model_ = load_model(path)
        self.metrics_ = []
        return self
