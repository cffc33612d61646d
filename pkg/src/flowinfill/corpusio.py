"""Corpus serialization.

On disk a corpus is a directory:

    manifest.tsv      id<TAB>speaker_id<TAB>transcript<TAB>feature_file<TAB>alignment_file
    feats/<id>.bin    uint32 LE dim, uint32 LE frames, then row-major float32
    align/<id>.tsv    lines "token_index start_frame end_frame"
    templates.bin     template matrix in the feature-file format (dim x n_templates)
    speakers.tsv      id<TAB>rate<TAB>comma-separated offset
    lexicon.tsv       word<TAB>PH1 PH2 ...
    corpus.meta       generation config, flat key = value

Feature/alignment paths in the manifest are relative to the directory.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import AlignmentError, ConfigError
from .features import FeatureSeq
from .kvconfig import read_kv, write_kv
from .masking import Alignment, AlignSpan
from .text import PronunciationLexicon, parse_markup
from .tokens import toy_vocabulary
from .toybench import CorpusSample, SpeakerSpec, ToyCorpus, ToyCorpusConfig

_FEAT_HEADER = struct.Struct("<II")


def write_features(path, feats: FeatureSeq) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_FEAT_HEADER.pack(feats.feature_dim, feats.n_frames))
        fh.write(np.ascontiguousarray(feats.data, dtype="<f4").tobytes(order="C"))


def read_features(path, frame_hop: float = 0.01) -> FeatureSeq:
    with open(path, "rb") as fh:
        header = fh.read(_FEAT_HEADER.size)
        if len(header) != _FEAT_HEADER.size:
            raise ConfigError(f"{path}: truncated feature header")
        dim, frames = _FEAT_HEADER.unpack(header)
        raw = fh.read(4 * dim * frames)
        if len(raw) != 4 * dim * frames:
            raise ConfigError(f"{path}: truncated feature data")
    data = np.frombuffer(raw, dtype="<f4").reshape(dim, frames)
    return FeatureSeq(data.astype(np.float64), frame_hop)


def write_alignment(path, align: Alignment) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for span in align.spans:
            fh.write(f"{span.index} {span.start} {span.end}\n")


def read_alignment(path) -> Alignment:
    spans = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise AlignmentError(
                    f"{path}:{line_no}: expected 'index start end', got {line!r}"
                )
            spans.append(AlignSpan(int(parts[0]), int(parts[1]), int(parts[2])))
    return Alignment(tuple(spans))


def save_corpus(directory, world: ToyCorpus) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_kv(directory / "corpus.meta", world.config.to_dict())
    write_features(
        directory / "templates.bin", FeatureSeq(world.templates.T, world.config.frame_hop)
    )
    with open(directory / "speakers.tsv", "w", encoding="utf-8") as fh:
        for spk in world.speakers:
            offset = ",".join(repr(float(v)) for v in spk.offset)
            fh.write(f"{spk.id}\t{spk.rate!r}\t{offset}\n")
    world.lexicon.save(directory / "lexicon.tsv")
    with open(directory / "manifest.tsv", "w", encoding="utf-8") as fh:
        for sample in world.samples:
            text = sample.transcript.raw
            if "\t" in text or "\n" in text:
                raise ConfigError(f"sample {sample.id}: transcript contains tab/newline")
            feat_rel = f"feats/{sample.id}.bin"
            align_rel = f"align/{sample.id}.tsv"
            write_features(directory / feat_rel, sample.feats)
            write_alignment(directory / align_rel, sample.alignment)
            fh.write(f"{sample.id}\t{sample.speaker_id}\t{text}\t{feat_rel}\t{align_rel}\n")


def load_corpus(directory) -> ToyCorpus:
    directory = Path(directory)
    if not (directory / "manifest.tsv").exists():
        raise ConfigError(f"{directory} has no manifest.tsv")
    config = ToyCorpusConfig.from_dict(read_kv(directory / "corpus.meta"))
    vocab = toy_vocabulary()
    template_chars = world_template_chars(config)
    templates = read_features(directory / "templates.bin").data.T
    speakers = []
    with open(directory / "speakers.tsv", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            spk_id, rate, offset = line.split("\t")
            speakers.append(
                SpeakerSpec(
                    int(spk_id),
                    np.array([float(v) for v in offset.split(",")]),
                    float(rate),
                )
            )
    lexicon = PronunciationLexicon.load(directory / "lexicon.tsv", vocab)
    world = ToyCorpus(
        config=config,
        vocab=vocab,
        template_chars=template_chars,
        templates=templates,
        speakers=tuple(speakers),
        lexicon=lexicon,
    )
    samples = []
    with open(directory / "manifest.tsv", "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ConfigError(
                    f"manifest.tsv:{line_no}: expected 5 tab-separated fields"
                )
            sample_id, speaker_id, text, feat_rel, align_rel = parts
            feats = read_features(directory / feat_rel, config.frame_hop)
            alignment = read_alignment(directory / align_rel)
            transcript = parse_markup(text, vocab)
            if len(alignment) != len(transcript):
                raise AlignmentError(
                    f"{sample_id}: alignment has {len(alignment)} spans for "
                    f"{len(transcript)} tokens"
                )
            if alignment.n_frames != feats.n_frames:
                raise AlignmentError(
                    f"{sample_id}: alignment covers {alignment.n_frames} frames, "
                    f"features have {feats.n_frames}"
                )
            samples.append(
                CorpusSample(
                    id=sample_id,
                    speaker_id=int(speaker_id),
                    transcript=transcript,
                    feats=feats,
                    alignment=alignment,
                )
            )
    world.samples = samples
    return world


def world_template_chars(config: ToyCorpusConfig) -> tuple[str, ...]:
    from .tokens import TOY_LETTERS

    return tuple(TOY_LETTERS[: config.alphabet_size - 1]) + (" ",)
