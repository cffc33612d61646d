"""Synthetic benchmark with exact oracles.

Each character owns a fixed template vector; a speaker is an additive offset
plus a speaking rate; an utterance tiles per-character templates for a
rate-scaled number of frames, cross-fades one frame at segment boundaries,
and adds Gaussian noise. Because construction is known exactly, decoding,
speaker identification, forced alignment, and duration expectations all have
closed-form oracles.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    ConfigError,
    EmptyReference,
    ShapeMismatch,
    SimUndefined,
)
from .features import FeatureSeq
from .masking import Alignment, AlignSpan
from .rng import DATA, EVAL, LEXICON, SPEAKERS, TEMPLATES, RngStream
from .text import PronunciationLexicon, Transcript, parse_markup
from .tokens import TOY_LETTERS, Token, TokenKind, Vocabulary, toy_phoneme_for, toy_vocabulary
from .validation import (
    check_non_negative_int,
    check_positive,
    check_positive_int,
    check_probability,
)

# Fraction of the next character's template blended into a segment's final
# frame. Kept below 0.5 so every frame's nearest template is its own character
# and noise-free decoding is exact by construction.
CROSSFADE_NEXT_WEIGHT = 0.25

# Decoded runs shorter than this are treated as boundary flicker and dropped.
MIN_RUN = 2

RATE_BOUNDS = (0.5, 2.0)


@dataclass(frozen=True)
class SpeakerSpec:
    """A speaker: additive feature offset and base speaking rate."""

    id: int
    offset: np.ndarray
    rate: float

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=np.float64)
        if offset.ndim != 1:
            raise ShapeMismatch("speaker offset must be a vector")
        if not RATE_BOUNDS[0] <= self.rate <= RATE_BOUNDS[1]:
            raise ConfigError(
                f"speaker rate {self.rate} outside {RATE_BOUNDS}"
            )
        object.__setattr__(self, "offset", offset)


@dataclass(frozen=True)
class CorpusSample:
    id: str
    speaker_id: int
    transcript: Transcript
    feats: FeatureSeq
    alignment: Alignment


@dataclass(frozen=True)
class ToyCorpusConfig:
    n_samples: int = 2000
    n_speakers: int = 10
    alphabet_size: int = 16  # letters plus the space character
    feature_dim: int = 16
    noise_std: float = 0.1
    template_scale: float = 1.0
    n_words: int = 48
    word_len: tuple[int, int] = (2, 5)
    words_per_sample: tuple[int, int] = (1, 4)
    base_durs: tuple[int, ...] = (4, 5, 6, 7)
    space_dur: int = 4
    rate_range: tuple[float, float] = (0.85, 1.2)
    rate_jitter: float = 0.12
    offset_norm: tuple[float, float] = (1.0, 2.0)
    frame_hop: float = 0.01
    seed: int = 0
    split: str = "train"

    def __post_init__(self):
        check_positive_int(self.n_samples, "n_samples")
        check_positive_int(self.n_speakers, "n_speakers")
        if not 3 <= self.alphabet_size <= len(TOY_LETTERS) + 1:
            raise ConfigError(
                f"alphabet_size must be in [3, {len(TOY_LETTERS) + 1}] "
                "(letters plus space)"
            )
        if self.feature_dim < self.alphabet_size:
            raise ConfigError(
                "feature_dim must be >= alphabet_size so templates can be "
                "mutually orthogonal"
            )
        check_positive(self.template_scale, "template_scale")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        separation = self.template_scale * np.sqrt(2.0)
        if self.noise_std > 0 and separation <= 6.0 * self.noise_std:
            raise ConfigError(
                f"template separation {separation:.3f} must exceed "
                f"6 * noise_std = {6 * self.noise_std:.3f}"
            )
        if not 2 <= self.word_len[0] <= self.word_len[1]:
            raise ConfigError("word_len must satisfy 2 <= lo <= hi")
        if not 1 <= self.words_per_sample[0] <= self.words_per_sample[1]:
            raise ConfigError("words_per_sample must satisfy 1 <= lo <= hi")
        if min(self.base_durs) < 2 or self.space_dur < 2:
            raise ConfigError("base durations must be >= 2 frames")
        lo, hi = self.rate_range
        if not RATE_BOUNDS[0] <= lo <= hi <= RATE_BOUNDS[1]:
            raise ConfigError(f"rate_range must lie inside {RATE_BOUNDS}")
        if not 0 <= self.rate_jitter < 0.5:
            raise ConfigError("rate_jitter must be in [0, 0.5)")
        if not 0 < self.offset_norm[0] <= self.offset_norm[1]:
            raise ConfigError("offset_norm must satisfy 0 < lo <= hi")
        check_positive_int(self.n_words, "n_words")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in asdict(self).items()
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyCorpusConfig":
        kwargs = dict(d)
        for key in ("word_len", "words_per_sample", "base_durs", "rate_range", "offset_norm"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class ToyCorpus:
    """A generated corpus plus everything its oracles need."""

    config: ToyCorpusConfig
    vocab: Vocabulary
    template_chars: tuple[str, ...]
    templates: np.ndarray  # [n_templates, feature_dim]
    speakers: tuple[SpeakerSpec, ...]
    lexicon: PronunciationLexicon
    samples: list[CorpusSample] = field(default_factory=list)

    def template_index(self, char: str) -> int:
        try:
            return self.template_chars.index(char)
        except ValueError:
            raise ConfigError(f"character {char!r} has no template") from None

    def base_dur(self, char: str) -> int:
        if char == " ":
            return self.config.space_dur
        idx = TOY_LETTERS.index(char)
        return self.config.base_durs[idx % len(self.config.base_durs)]

    def expected_frames(self, tokens: tuple[Token, ...], rate: float) -> int:
        """Frame count the generator would assign this text at this rate."""
        total = 0
        for tok in tokens:
            surface = self.vocab.surface(tok)
            if tok.kind is TokenKind.PHONEME:
                surface = _letter_for_phoneme(surface)
            total += max(1, int(round(rate * self.base_dur(surface))))
        return total

    def realized_rate(self, sample: CorpusSample) -> float:
        """The utterance's actual rate, recovered exactly from its alignment."""
        base = sum(
            self.base_dur(self.vocab.surface(tok)) for tok in sample.transcript.tokens
        )
        return sample.feats.n_frames / base

    def speaker(self, speaker_id: int) -> SpeakerSpec:
        return self.speakers[speaker_id]


def _letter_for_phoneme(symbol: str) -> str:
    letter = symbol[0].lower()
    if len(symbol) == 2 and symbol.endswith("H") and letter in TOY_LETTERS:
        return letter
    raise ConfigError(f"phoneme {symbol!r} has no letter in the toy alphabet")


def _make_words(
    letters: str, config: ToyCorpusConfig, rng: RngStream
) -> tuple[str, ...]:
    if len(letters) < 2:
        raise ConfigError("need at least two letters to avoid repeated-letter words")
    words: list[str] = []
    seen: set[str] = set()
    attempts = 0
    while len(words) < config.n_words:
        attempts += 1
        if attempts > 200 * config.n_words:
            raise ConfigError(
                "could not draw enough distinct words; enlarge the alphabet "
                "or reduce n_words"
            )
        length = int(rng.gen.integers(config.word_len[0], config.word_len[1] + 1))
        chars = [letters[int(rng.gen.integers(len(letters)))]]
        while len(chars) < length:
            # draw from the alphabet minus the previous letter so adjacent
            # repeats (which run-length decoding would fuse) cannot occur
            r = int(rng.gen.integers(len(letters) - 1))
            if r >= letters.index(chars[-1]):
                r += 1
            chars.append(letters[r])
        word = "".join(chars)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return tuple(words)


def _render_sample(
    world: ToyCorpus,
    transcript: Transcript,
    speaker: SpeakerSpec,
    rate: float,
    noise: np.ndarray | None,
) -> tuple[FeatureSeq, Alignment]:
    config = world.config
    tokens = transcript.tokens
    counts = [
        max(1, int(round(rate * world.base_dur(world.vocab.surface(tok)))))
        for tok in tokens
    ]
    total = sum(counts)
    data = np.zeros((config.feature_dim, total))
    spans = []
    cursor = 0
    for k, (tok, count) in enumerate(zip(tokens, counts)):
        tpl = world.templates[world.template_index(world.vocab.surface(tok))]
        block = np.tile(tpl[:, None], (1, count))
        if k + 1 < len(tokens):
            nxt = world.templates[
                world.template_index(world.vocab.surface(tokens[k + 1]))
            ]
            block[:, -1] = (1 - CROSSFADE_NEXT_WEIGHT) * tpl + CROSSFADE_NEXT_WEIGHT * nxt
        data[:, cursor : cursor + count] = block + speaker.offset[:, None]
        spans.append(AlignSpan(k, cursor, cursor + count))
        cursor += count
    if noise is not None:
        data = data + noise[:, :total]
    return FeatureSeq(data, config.frame_hop), Alignment(tuple(spans))


def gen_corpus(config: ToyCorpusConfig) -> ToyCorpus:
    """Generate a corpus; equal configs give bit-identical corpora.

    Templates, speakers, and the word list depend only on the seed, so train
    and eval splits of the same seed share a world and differ only in the
    sampled utterances.
    """
    vocab = toy_vocabulary()
    letters = TOY_LETTERS[: config.alphabet_size - 1]
    template_chars = tuple(letters) + (" ",)

    tpl_rng = RngStream(config.seed, TEMPLATES)
    gauss = tpl_rng.gen.standard_normal((config.feature_dim, config.feature_dim))
    q, _ = np.linalg.qr(gauss)
    templates = q[: len(template_chars)] * config.template_scale

    spk_rng = RngStream(config.seed, SPEAKERS)
    lo_r, hi_r = config.rate_range
    speakers = []
    for i in range(config.n_speakers):
        direction = spk_rng.gen.standard_normal(config.feature_dim)
        direction /= np.linalg.norm(direction)
        norm = spk_rng.gen.uniform(*config.offset_norm)
        if config.n_speakers == 1:
            rate = (lo_r + hi_r) / 2.0
        else:
            rate = lo_r + (hi_r - lo_r) * i / (config.n_speakers - 1)
        speakers.append(SpeakerSpec(i, direction * norm, float(rate)))

    words = _make_words(letters, config, RngStream(config.seed, LEXICON))
    lexicon = PronunciationLexicon(
        {w: tuple(toy_phoneme_for(c) for c in w) for w in words}, vocab
    )

    world = ToyCorpus(
        config=config,
        vocab=vocab,
        template_chars=template_chars,
        templates=templates,
        speakers=tuple(speakers),
        lexicon=lexicon,
    )

    data_rng = RngStream(config.seed, DATA).child(zlib.crc32(config.split.encode()))
    samples = []
    for i in range(config.n_samples):
        speaker = speakers[int(data_rng.gen.integers(config.n_speakers))]
        n_words = int(
            data_rng.gen.integers(
                config.words_per_sample[0], config.words_per_sample[1] + 1
            )
        )
        picks = data_rng.gen.integers(len(words), size=n_words)
        text = " ".join(words[int(p)] for p in picks)
        transcript = parse_markup(text, vocab)
        jitter = float(np.exp(data_rng.gen.uniform(-config.rate_jitter, config.rate_jitter)))
        rate = float(np.clip(speaker.rate * jitter, *RATE_BOUNDS))
        upper = sum(
            world.base_dur(c) for c in text
        )  # frame bound at the slowest admissible rate
        noise = (
            data_rng.gen.standard_normal((config.feature_dim, 2 * upper + 8))
            * config.noise_std
            if config.noise_std > 0
            else None
        )
        feats, alignment = _render_sample(world, transcript, speaker, rate, noise)
        samples.append(
            CorpusSample(
                id=f"{config.split}-{i:05d}",
                speaker_id=speaker.id,
                transcript=transcript,
                feats=feats,
                alignment=alignment,
            )
        )
    world.samples = samples
    return world


# --- Oracle decoding --------------------------------------------------------


@dataclass(frozen=True)
class DecodeResult:
    transcript: Transcript
    offset: np.ndarray
    rate: float
    speaker_id: int
    assignments: np.ndarray  # template index per frame


def _template_distances(frames: np.ndarray, templates: np.ndarray, offset: np.ndarray) -> np.ndarray:
    shifted = frames - offset[None, :]
    return ((shifted[:, None, :] - templates[None, :, :]) ** 2).sum(axis=-1)


def oracle_decode(feats: FeatureSeq, world: ToyCorpus) -> DecodeResult:
    """Nearest-template decoding with speaker-offset refinement.

    Picks the known speaker whose offset explains the frames best, re-estimates
    the offset from assignment residuals, reassigns, and collapses runs of
    identical assignments (dropping sub-MIN_RUN flicker) into characters.
    """
    frames = feats.data.T  # [T, D]
    if frames.shape[1] != world.templates.shape[1]:
        raise ShapeMismatch(
            f"features have dim {frames.shape[1]}, templates {world.templates.shape[1]}"
        )
    best_id, best_cost = 0, np.inf
    for spk in world.speakers:
        cost = _template_distances(frames, world.templates, spk.offset).min(axis=1).sum()
        if cost < best_cost:
            best_id, best_cost = spk.id, cost
    offset = world.speakers[best_id].offset
    for _ in range(2):
        dists = _template_distances(frames, world.templates, offset)
        assign = dists.argmin(axis=1)
        offset = (frames - world.templates[assign]).mean(axis=0)
    chars = []
    run_start = 0
    for t in range(1, len(assign) + 1):
        if t == len(assign) or assign[t] != assign[run_start]:
            if t - run_start >= MIN_RUN:
                chars.append(world.template_chars[assign[run_start]])
            run_start = t
    text = "".join(chars).strip()
    transcript = parse_markup(text, world.vocab)
    if transcript.tokens:
        base = sum(world.base_dur(c) for c in text)
        rate = frames.shape[0] / base if base else float("nan")
    else:
        rate = float("nan")
    return DecodeResult(
        transcript=transcript,
        offset=offset,
        rate=rate,
        speaker_id=best_id,
        assignments=assign,
    )


def oracle_boundaries(
    feats: FeatureSeq, transcript: Transcript, world: ToyCorpus, offset: np.ndarray | None = None
) -> list[int]:
    """Forced alignment: per-token start frames under the template model.

    Dynamic program over (frame, token) with every token taking at least one
    frame; returns len(transcript) start frames.
    """
    if len(transcript) == 0:
        raise EmptyReference("cannot align an empty transcript")
    if offset is None:
        offset = oracle_decode(feats, world).offset
    frames = feats.data.T
    n, m = frames.shape[0], len(transcript)
    if n < m:
        raise ShapeMismatch(f"{n} frames cannot hold {m} tokens")
    tpl = np.stack(
        [
            world.templates[world.template_index(world.vocab.surface(tok))]
            for tok in transcript.tokens
        ]
    )
    cost = ((frames[:, None, :] - offset[None, None, :] - tpl[None, :, :]) ** 2).sum(-1)
    acc = np.full((n, m), np.inf)
    choice = np.zeros((n, m), dtype=np.int8)  # 1 = came from previous token
    acc[0, 0] = cost[0, 0]
    for t in range(1, n):
        acc[t, 0] = acc[t - 1, 0] + cost[t, 0]
        lo = max(1, m - (n - t))
        hi = min(t, m - 1)
        for k in range(lo, hi + 1):
            stay, advance = acc[t - 1, k], acc[t - 1, k - 1]
            if advance < stay:
                acc[t, k] = advance + cost[t, k]
                choice[t, k] = 1
            else:
                acc[t, k] = stay + cost[t, k]
    starts = np.zeros(m, dtype=np.int64)
    k = m - 1
    for t in range(n - 1, 0, -1):
        if choice[t, k]:
            starts[k] = t
            k -= 1
        if k == 0:
            break
    starts[0] = 0
    return [int(v) for v in starts]


# --- Metrics ----------------------------------------------------------------


def levenshtein(a, b) -> int:
    """Edit distance over arbitrary hashable items, two-row dynamic program."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def eval_cer(ref: Transcript, hyp: Transcript) -> float:
    """Character error rate: edit distance over tokens divided by ref length."""
    if len(ref) == 0:
        raise EmptyReference("reference transcript is empty")
    ref_ids = [t.id for t in ref.tokens]
    hyp_ids = [t.id for t in hyp.tokens]
    return levenshtein(ref_ids, hyp_ids) / len(ref_ids)


def eval_sim(prompt_feats: FeatureSeq, gen_feats: FeatureSeq, world: ToyCorpus) -> float:
    """Speaker similarity: cosine of the oracle-estimated offsets."""
    off_p = oracle_decode(prompt_feats, world).offset
    off_g = oracle_decode(gen_feats, world).offset
    norm_p, norm_g = np.linalg.norm(off_p), np.linalg.norm(off_g)
    if norm_p < 1e-9 or norm_g < 1e-9:
        raise SimUndefined("an estimated speaker offset has (near-)zero norm")
    return float(off_p @ off_g / (norm_p * norm_g))


# --- Evaluation harness and sweeps -----------------------------------------


@dataclass(frozen=True)
class EvalCase:
    """One prompt-plus-text scenario; gen_frames None defers to a duration model."""

    prompt: CorpusSample
    text_ref: Transcript
    text_cond: Transcript
    gen_frames: int | None
    noise_index: int


def make_eval_cases(
    world: ToyCorpus,
    n_cases: int,
    explicit_duration: bool = True,
    phoneme_sub_prob: float = 0.0,
    speech_rate: float = 1.0,
    seed: int = 0,
) -> list[EvalCase]:
    """Cross-pair samples: prompt i speaks the transcript of sample i+1.

    Explicit durations come from the prompt's realized rate; otherwise
    gen_frames is left unset for a duration model to fill in.
    """
    check_positive_int(n_cases, "n_cases")
    check_probability(phoneme_sub_prob, "phoneme_sub_prob")
    check_positive(speech_rate, "speech_rate")
    if n_cases > len(world.samples):
        raise ConfigError(
            f"asked for {n_cases} cases but the corpus has {len(world.samples)} samples"
        )
    sub_rng = RngStream(seed, EVAL)
    cases = []
    for i in range(n_cases):
        prompt = world.samples[i]
        text_ref = world.samples[(i + 1) % n_cases].transcript
        text_cond = text_ref
        if phoneme_sub_prob > 0:
            from .text import substitute_phonemes

            text_cond = substitute_phonemes(
                text_ref, world.lexicon, phoneme_sub_prob, sub_rng
            )
        gen_frames = None
        if explicit_duration:
            rate = world.realized_rate(prompt)
            gen_frames = world.expected_frames(text_ref.tokens, rate)
            if speech_rate != 1.0:
                gen_frames = max(1, int(round(gen_frames / speech_rate)))
        cases.append(
            EvalCase(
                prompt=prompt,
                text_ref=text_ref,
                text_cond=text_cond,
                gen_frames=gen_frames,
                noise_index=i,
            )
        )
    return cases


@dataclass(frozen=True)
class EvalRecord:
    case_index: int
    cer: float
    sim: float
    gen_frames: int
    decoded: str


def evaluate_cases(
    model,
    world: ToyCorpus,
    cases: list[EvalCase],
    sampler_config,
    duration_model=None,
    x1_mode: bool = False,
    batch_size: int = 25,
) -> list[EvalRecord]:
    from .sampling import SynthesisRequest, synthesize_batch

    records: list[EvalRecord] = []
    for lo in range(0, len(cases), batch_size):
        chunk = cases[lo : lo + batch_size]
        requests = [
            SynthesisRequest(
                prompt_feats=case.prompt.feats,
                text=case.text_cond,
                prompt_transcript=None if x1_mode else case.prompt.transcript,
                gen_frames=case.gen_frames,
                x1_mode=x1_mode,
                noise_index=case.noise_index,
            )
            for case in chunk
        ]
        outputs = synthesize_batch(model, requests, sampler_config, duration_model)
        for case, out in zip(chunk, outputs):
            decoded = oracle_decode(out, world)
            cer = eval_cer(case.text_ref, decoded.transcript)
            sim = eval_sim(case.prompt.feats, out, world)
            records.append(
                EvalRecord(
                    case_index=case.noise_index,
                    cer=cer,
                    sim=sim,
                    gen_frames=out.n_frames,
                    decoded=decoded.transcript.raw,
                )
            )
    return records


def summarize_records(records: list[EvalRecord]) -> dict:
    return {
        "n": len(records),
        "mean_cer": float(np.mean([r.cer for r in records])) if records else float("nan"),
        "mean_sim": float(np.mean([r.sim for r in records])) if records else float("nan"),
    }


def _truncate_prompt(sample: CorpusSample, target_frames: int) -> CorpusSample:
    """Cut a prompt at the token boundary nearest the requested frame count."""
    spans = sample.alignment.spans
    cuts = [(abs(span.end - target_frames), k) for k, span in enumerate(spans)]
    _, k = min(cuts)
    end = spans[k].end
    if end >= sample.feats.n_frames:
        return sample
    return CorpusSample(
        id=f"{sample.id}~{end}",
        speaker_id=sample.speaker_id,
        transcript=sample.transcript.slice_tokens(0, k + 1),
        feats=sample.feats.slice_frames(0, end),
        alignment=Alignment(spans[: k + 1]),
    )


def sweep_prompt_length(
    model,
    world: ToyCorpus,
    cases: list[EvalCase],
    sampler_config,
    fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0),
    batch_size: int = 25,
) -> list[dict]:
    """CER/SIM per prompt-length bucket; buckets truncate each case's prompt.

    Target text and generation length are held fixed across buckets so the
    prompt's frame count is the only thing changing.
    """
    if len(fractions) < 2 or any(not 0 < f <= 1 for f in fractions):
        raise ConfigError("fractions must be at least two values in (0, 1]")
    rows = []
    for b, frac in enumerate(fractions):
        bucket_cases = []
        for case in cases:
            target = max(1, int(round(frac * case.prompt.feats.n_frames)))
            bucket_cases.append(
                replace(
                    case,
                    prompt=_truncate_prompt(case.prompt, target),
                    noise_index=b * len(cases) + case.noise_index,
                )
            )
        records = evaluate_cases(
            model, world, bucket_cases, sampler_config, batch_size=batch_size
        )
        mean_frames = float(
            np.mean([c.prompt.feats.n_frames for c in bucket_cases])
        )
        rows.append(
            {
                "fraction": frac,
                "mean_prompt_frames": mean_frames,
                **summarize_records(records),
            }
        )
    return rows


def sweep_speech_rate(
    model,
    world: ToyCorpus,
    cases: list[EvalCase],
    sampler_config,
    rates: tuple[float, ...] = (0.7, 0.85, 1.0, 1.15, 1.3),
    batch_size: int = 25,
) -> list[dict]:
    """CER/SIM per requested speech rate; durations scale as round(T / rate)."""
    if any(r <= 0 for r in rates):
        raise ConfigError("speech rates must be positive")
    for case in cases:
        if case.gen_frames is None:
            raise ConfigError("speech-rate sweeps need explicit base durations")
    rows = []
    for b, rate in enumerate(rates):
        bucket_cases = [
            replace(
                case,
                gen_frames=max(1, int(round(case.gen_frames / rate))),
                noise_index=b * len(cases) + case.noise_index,
            )
            for case in cases
        ]
        records = evaluate_cases(
            model, world, bucket_cases, sampler_config, batch_size=batch_size
        )
        lengths_ok = all(
            r.gen_frames == c.gen_frames for r, c in zip(records, bucket_cases)
        )
        rows.append(
            {
                "speech_rate": rate,
                "lengths_exact": lengths_ok,
                **summarize_records(records),
            }
        )
    return rows
