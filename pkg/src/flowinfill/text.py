"""Transcripts, pronunciation markup, lexica, and extended-sequence assembly.

A transcript is a flat token sequence (characters and/or phoneme symbols)
plus the word spans inside it. Pronunciation markup groups space-separated
phoneme symbols in parentheses: ``"a (BH CH) d"``. The parentheses delimit
groups for the parser only and are never emitted as tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .exceptions import (
    InsufficientDuration,
    LengthOverflow,
    MarkupError,
    UnknownSymbol,
)
from .rng import RngStream
from .tokens import FILLER, ExtendedCharSeq, Token, TokenKind, Vocabulary
from .validation import check_non_negative_int, check_probability

WORD_EDGE_PUNCT = set(".,!?;:'\"-")


@dataclass(frozen=True)
class WordSpan:
    """Half-open token range [start, end) of one word, with its surface text."""

    start: int
    end: int
    text: str


@dataclass(frozen=True)
class Transcript:
    raw: str
    tokens: tuple[Token, ...]
    word_spans: tuple[WordSpan, ...]
    vocab: Vocabulary = field(compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_words(self) -> int:
        return len(self.word_spans)

    def to_markup(self) -> str:
        return render_markup(self.tokens, self.vocab)

    def slice_tokens(self, start: int, end: int) -> "Transcript":
        """Sub-transcript over the token range [start, end)."""
        return transcript_from_tokens(self.tokens[start:end], self.vocab)


def _is_space(tok: Token, vocab: Vocabulary) -> bool:
    return tok.kind is TokenKind.CHAR and vocab.surface(tok) == " "


def _is_edge_punct(tok: Token, vocab: Vocabulary) -> bool:
    return tok.kind is TokenKind.CHAR and vocab.surface(tok) in WORD_EDGE_PUNCT


def render_markup(tokens: tuple[Token, ...], vocab: Vocabulary) -> str:
    """Serialize tokens back to text, wrapping phoneme runs in parentheses."""
    parts: list[str] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind is TokenKind.PHONEME:
            j = i
            while j < len(tokens) and tokens[j].kind is TokenKind.PHONEME:
                j += 1
            parts.append("(" + " ".join(vocab.surface(t) for t in tokens[i:j]) + ")")
            i = j
        elif tok.kind is TokenKind.FILLER:
            parts.append(vocab.surface(tok))
            i += 1
        else:
            parts.append(vocab.surface(tok))
            i += 1
    return "".join(parts)


def _find_word_spans(
    tokens: tuple[Token, ...], vocab: Vocabulary
) -> tuple[WordSpan, ...]:
    spans: list[WordSpan] = []
    i = 0
    n = len(tokens)
    while i < n:
        if _is_space(tokens[i], vocab):
            i += 1
            continue
        j = i
        while j < n and not _is_space(tokens[j], vocab):
            j += 1
        start, end = i, j
        while start < end and _is_edge_punct(tokens[start], vocab):
            start += 1
        while end > start and _is_edge_punct(tokens[end - 1], vocab):
            end -= 1
        if end > start:
            spans.append(WordSpan(start, end, render_markup(tokens[start:end], vocab)))
        i = j
    return tuple(spans)


def transcript_from_tokens(tokens, vocab: Vocabulary) -> Transcript:
    tokens = tuple(tokens)
    for tok in tokens:
        if tok.kind is TokenKind.FILLER:
            raise MarkupError("transcripts cannot contain filler tokens")
    return Transcript(
        raw=render_markup(tokens, vocab),
        tokens=tokens,
        word_spans=_find_word_spans(tokens, vocab),
        vocab=vocab,
    )


def parse_markup(text: str, vocab: Vocabulary) -> Transcript:
    """Parse text with optional phoneme-group markup into a transcript.

    Characters map one-to-one to char tokens. A parenthesized group holds
    space-separated phoneme symbols; nesting and empty groups are malformed.
    """
    tokens: list[Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "(":
            close = text.find(")", i + 1)
            if close < 0:
                raise MarkupError(f"unclosed '(' at position {i}")
            body = text[i + 1 : close]
            if "(" in body:
                raise MarkupError("nested phoneme groups are not allowed")
            symbols = body.split()
            if not symbols:
                raise MarkupError(f"empty phoneme group at position {i}")
            for sym in symbols:
                tokens.append(vocab.phoneme(sym))
            i = close + 1
        elif ch == ")":
            raise MarkupError(f"unmatched ')' at position {i}")
        else:
            tokens.append(vocab.char(ch))
            i += 1
    return Transcript(
        raw=text,
        tokens=tuple(tokens),
        word_spans=_find_word_spans(tuple(tokens), vocab),
        vocab=vocab,
    )


# --- Extended sequence assembly --------------------------------------------


def build_training_seq(transcript: Transcript, n_frames: int) -> ExtendedCharSeq:
    """Pad a transcript with fillers up to the sample's frame count."""
    n_frames = check_non_negative_int(n_frames, "n_frames")
    n_tokens = len(transcript)
    if n_tokens > n_frames:
        raise LengthOverflow(
            f"transcript has {n_tokens} tokens but the sample only {n_frames} frames"
        )
    return ExtendedCharSeq(
        transcript.tokens + (FILLER,) * (n_frames - n_tokens), boundary=None
    )


def build_inference_seq(
    prompt_transcript: Transcript,
    text_transcript: Transcript,
    prompt_frames: int,
    gen_frames: int,
) -> ExtendedCharSeq:
    """Concatenate prompt and target tokens, filler-padded to the full window."""
    prompt_frames = check_non_negative_int(prompt_frames, "prompt_frames")
    gen_frames = check_non_negative_int(gen_frames, "gen_frames")
    m_aud = len(prompt_transcript)
    m_text = len(text_transcript)
    n_fill = prompt_frames + gen_frames - m_aud - m_text
    if n_fill < 0:
        raise InsufficientDuration(
            f"window of {prompt_frames + gen_frames} frames cannot hold "
            f"{m_aud + m_text} tokens; need gen_frames >= {m_aud + m_text - prompt_frames}"
        )
    tokens = prompt_transcript.tokens + text_transcript.tokens + (FILLER,) * n_fill
    return ExtendedCharSeq(tokens, boundary=m_aud)


def build_inference_seq_x1(
    text_transcript: Transcript, prompt_frames: int, gen_frames: int
) -> ExtendedCharSeq:
    """Transcript-free variant: target tokens only, no prompt transcript."""
    prompt_frames = check_non_negative_int(prompt_frames, "prompt_frames")
    gen_frames = check_non_negative_int(gen_frames, "gen_frames")
    m_text = len(text_transcript)
    n_fill = prompt_frames + gen_frames - m_text
    if n_fill < 0:
        raise InsufficientDuration(
            f"window of {prompt_frames + gen_frames} frames cannot hold "
            f"{m_text} tokens; need gen_frames >= {m_text - prompt_frames}"
        )
    return ExtendedCharSeq(text_transcript.tokens + (FILLER,) * n_fill, boundary=0)


# --- Pronunciation lexicon --------------------------------------------------


class PronunciationLexicon:
    """Word to phoneme-symbol-sequence map, file format ``word<TAB>PH1 PH2 ...``."""

    def __init__(self, entries: dict[str, tuple[str, ...]], vocab: Vocabulary):
        self.vocab = vocab
        self._entries: dict[str, tuple[str, ...]] = {}
        for word, symbols in entries.items():
            symbols = tuple(symbols)
            if not word or not symbols:
                raise UnknownSymbol(f"empty lexicon entry for {word!r}")
            for sym in symbols:
                vocab.phoneme(sym)  # raises UnknownSymbol if unregistered
            self._entries[word] = symbols

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def phonemes(self, word: str) -> tuple[str, ...]:
        try:
            return self._entries[word]
        except KeyError:
            raise UnknownSymbol(f"word {word!r} is not in the lexicon") from None

    def words(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, symbols in self._entries.items():
                fh.write(f"{word}\t{' '.join(symbols)}\n")

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "PronunciationLexicon":
        entries: dict[str, tuple[str, ...]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, symbols = line.split("\t", 1)
                except ValueError:
                    raise UnknownSymbol(
                        f"{path}:{line_no}: expected 'word<TAB>symbols'"
                    ) from None
                entries[word] = tuple(symbols.split())
        return cls(entries, vocab)


def substitute_phonemes(
    transcript: Transcript,
    lexicon: PronunciationLexicon,
    prob: float,
    rng: RngStream,
) -> Transcript:
    """Independently replace whole in-lexicon words with their phoneme tokens.

    Words containing phoneme tokens already, or absent from the lexicon, are
    left untouched; punctuation and spaces around words are preserved.
    """
    prob = check_probability(prob, "prob")
    replaced: dict[int, tuple[Token, ...]] = {}
    for idx, span in enumerate(transcript.word_spans):
        word_tokens = transcript.tokens[span.start : span.end]
        if any(t.kind is not TokenKind.CHAR for t in word_tokens):
            continue
        if span.text not in lexicon:
            continue
        if rng.gen.random() < prob:
            replaced[idx] = tuple(
                transcript.vocab.phoneme(sym) for sym in lexicon.phonemes(span.text)
            )
    if not replaced:
        return transcript
    out: list[Token] = []
    cursor = 0
    for idx, span in enumerate(transcript.word_spans):
        out.extend(transcript.tokens[cursor : span.start])
        if idx in replaced:
            out.extend(replaced[idx])
        else:
            out.extend(transcript.tokens[span.start : span.end])
        cursor = span.end
    out.extend(transcript.tokens[cursor:])
    return transcript_from_tokens(out, transcript.vocab)
