"""Flow-matching spectrogram infilling on a synthetic benchmark.

The package trains a transformer to regress the conditional flow field of a
masked-infilling task: given surrounding audio frames and a character sequence
padded with fillers, it learns to generate the masked span. Sampling follows
the learned field from noise with an explicit ODE solver under classifier-free
guidance. A self-contained synthetic corpus with exact decoding and alignment
oracles makes every stage measurable without external data.
"""

__version__ = "0.1.0"

from .backbone import BackboneConfig, FieldModel, build_field_model
from .checkpoint import load_model, read_checkpoint, save_model, write_checkpoint
from .corpusio import (
    load_corpus,
    read_alignment,
    read_features,
    save_corpus,
    write_alignment,
    write_features,
)
from .duration import (
    DurationConfig,
    DurationModel,
    DurationTrainConfig,
    apply_speech_rate,
    build_duration_model,
    predict_gen_frames,
    predict_total_frames,
    train_duration,
)
from .estimators import DurationRegressor, SpectrogramInfiller
from .exceptions import (
    AlignmentError,
    ConfigError,
    EmptyReference,
    FlowinfillError,
    InsufficientDuration,
    LengthOverflow,
    MarkupError,
    NumericalError,
    ShapeMismatch,
    SimUndefined,
    SingularFlowStep,
    UnknownSymbol,
    VocabularyError,
)
from .features import FeatureSeq, SpanMask, broadcast_mask, hadamard
from .kvconfig import format_kv, parse_kv, read_kv, write_kv
from .flow import (
    CfmConfig,
    MaskedExample,
    cfm_loss,
    cfm_loss_grads,
    drop_conditions,
    sample_path,
    target_field,
)
from .masking import Alignment, AlignSpan, sample_mask, sample_word_mask, word_alignment
from .rng import RngStream
from .sampling import (
    GuidedField,
    SamplerConfig,
    SynthesisRequest,
    cfg_field,
    euler_integrate,
    field_eval_budget,
    integrate,
    midpoint_integrate,
    synthesize,
    synthesize_batch,
)
from .text import (
    PronunciationLexicon,
    Transcript,
    build_inference_seq,
    build_inference_seq_x1,
    build_training_seq,
    parse_markup,
    render_markup,
    substitute_phonemes,
    transcript_from_tokens,
)
from .tokens import (
    FILLER,
    ExtendedCharSeq,
    Token,
    TokenKind,
    Vocabulary,
    toy_vocabulary,
)
from .toybench import (
    DecodeResult,
    EvalCase,
    EvalRecord,
    SpeakerSpec,
    ToyCorpus,
    ToyCorpusConfig,
    eval_cer,
    eval_sim,
    evaluate_cases,
    gen_corpus,
    levenshtein,
    make_eval_cases,
    oracle_boundaries,
    oracle_decode,
    summarize_records,
    sweep_prompt_length,
    sweep_speech_rate,
)
from .training import TrainConfig, epoch_batches, filter_samples, lr_at, train

__all__ = [
    "AlignSpan",
    "Alignment",
    "AlignmentError",
    "BackboneConfig",
    "CfmConfig",
    "ConfigError",
    "DecodeResult",
    "DurationConfig",
    "DurationModel",
    "DurationRegressor",
    "DurationTrainConfig",
    "EmptyReference",
    "EvalCase",
    "EvalRecord",
    "ExtendedCharSeq",
    "FILLER",
    "FeatureSeq",
    "FieldModel",
    "FlowinfillError",
    "GuidedField",
    "InsufficientDuration",
    "LengthOverflow",
    "MarkupError",
    "MaskedExample",
    "NumericalError",
    "PronunciationLexicon",
    "RngStream",
    "SamplerConfig",
    "ShapeMismatch",
    "SimUndefined",
    "SingularFlowStep",
    "SpanMask",
    "SpeakerSpec",
    "SpectrogramInfiller",
    "SynthesisRequest",
    "Token",
    "TokenKind",
    "ToyCorpus",
    "ToyCorpusConfig",
    "TrainConfig",
    "Transcript",
    "UnknownSymbol",
    "Vocabulary",
    "VocabularyError",
    "apply_speech_rate",
    "broadcast_mask",
    "build_duration_model",
    "build_field_model",
    "build_inference_seq",
    "build_inference_seq_x1",
    "build_training_seq",
    "cfg_field",
    "cfm_loss",
    "cfm_loss_grads",
    "drop_conditions",
    "epoch_batches",
    "eval_cer",
    "eval_sim",
    "evaluate_cases",
    "euler_integrate",
    "field_eval_budget",
    "filter_samples",
    "format_kv",
    "gen_corpus",
    "hadamard",
    "integrate",
    "levenshtein",
    "load_corpus",
    "load_model",
    "lr_at",
    "make_eval_cases",
    "midpoint_integrate",
    "oracle_boundaries",
    "oracle_decode",
    "parse_kv",
    "parse_markup",
    "predict_gen_frames",
    "predict_total_frames",
    "read_alignment",
    "read_checkpoint",
    "read_features",
    "read_kv",
    "render_markup",
    "sample_mask",
    "sample_path",
    "sample_word_mask",
    "save_corpus",
    "save_model",
    "substitute_phonemes",
    "summarize_records",
    "sweep_prompt_length",
    "sweep_speech_rate",
    "synthesize",
    "synthesize_batch",
    "target_field",
    "toy_vocabulary",
    "train",
    "train_duration",
    "transcript_from_tokens",
    "word_alignment",
    "write_alignment",
    "write_checkpoint",
    "write_features",
    "write_kv",
]
