"""Transcript parsing, markup, lexica, and extended-sequence assembly."""

import numpy as np
import pytest

from flowinfill import (
    FILLER,
    InsufficientDuration,
    LengthOverflow,
    MarkupError,
    PronunciationLexicon,
    RngStream,
    UnknownSymbol,
    build_inference_seq,
    build_inference_seq_x1,
    build_training_seq,
    parse_markup,
    substitute_phonemes,
    transcript_from_tokens,
)
from flowinfill.tokens import TokenKind


def test_plain_text_parses_to_char_tokens(vocab):
    t = parse_markup("ab cd", vocab)
    assert len(t) == 5
    assert all(tok.kind is TokenKind.CHAR for tok in t.tokens)
    assert t.raw == "ab cd"
    assert t.n_words == 2
    assert [w.text for w in t.word_spans] == ["ab", "cd"]
    assert (t.word_spans[0].start, t.word_spans[0].end) == (0, 2)
    assert (t.word_spans[1].start, t.word_spans[1].end) == (3, 5)


def test_phoneme_groups_become_phoneme_tokens(vocab):
    t = parse_markup("a (BH CH) d", vocab)
    kinds = [tok.kind for tok in t.tokens]
    # "a", " ", BH, CH, " ", "d" -- parentheses are never tokens
    assert len(t) == 6
    assert kinds[2] is TokenKind.PHONEME and kinds[3] is TokenKind.PHONEME
    assert t.to_markup() == "a (BH CH) d"


def test_markup_round_trip(vocab):
    for text in ["abc", "a (AH) c", "(AH BH CH)", "ab, cd!", "a  b"]:
        t = parse_markup(text, vocab)
        again = parse_markup(t.to_markup(), vocab)
        assert again.tokens == t.tokens


def test_markup_errors(vocab):
    with pytest.raises(MarkupError):
        parse_markup("a (BH", vocab)
    with pytest.raises(MarkupError):
        parse_markup("a )b", vocab)
    with pytest.raises(MarkupError):
        parse_markup("a ()", vocab)
    with pytest.raises(MarkupError):
        parse_markup("a ((BH))", vocab)
    with pytest.raises(UnknownSymbol):
        parse_markup("(ZZZ)", vocab)


def test_word_spans_strip_edge_punctuation(vocab):
    t = parse_markup("ab, 'cd'!", vocab)
    assert [w.text for w in t.word_spans] == ["ab", "cd"]
    # inner punctuation stays part of the word
    t2 = parse_markup("a-b", vocab)
    assert [w.text for w in t2.word_spans] == ["a-b"]
    # pure punctuation contributes no word
    t3 = parse_markup("ab .. cd", vocab)
    assert [w.text for w in t3.word_spans] == ["ab", "cd"]


def test_transcript_from_tokens_rejects_filler(vocab):
    with pytest.raises(MarkupError):
        transcript_from_tokens((vocab.char("a"), FILLER), vocab)


def test_slice_tokens(vocab):
    t = parse_markup("ab cd", vocab)
    sub = t.slice_tokens(3, 5)
    assert sub.raw == "cd"
    assert sub.n_words == 1


def test_training_seq_pads_to_frames(vocab):
    t = parse_markup("abc", vocab)
    seq = build_training_seq(t, 7)
    assert len(seq) == 7
    assert seq.n_fillers == 4
    assert seq.tokens[:3] == t.tokens
    assert seq.boundary is None
    with pytest.raises(LengthOverflow):
        build_training_seq(t, 2)


def test_inference_seq_layout(vocab):
    prompt = parse_markup("ab", vocab)
    text = parse_markup("cde", vocab)
    seq = build_inference_seq(prompt, text, prompt_frames=6, gen_frames=10)
    assert len(seq) == 16
    assert seq.boundary == 2
    assert seq.tokens[:2] == prompt.tokens
    assert seq.tokens[2:5] == text.tokens
    assert seq.n_fillers == 16 - 5
    with pytest.raises(InsufficientDuration):
        build_inference_seq(prompt, text, prompt_frames=2, gen_frames=1)


def test_inference_seq_x1_has_no_prompt_tokens(vocab):
    text = parse_markup("cde", vocab)
    seq = build_inference_seq_x1(text, prompt_frames=6, gen_frames=4)
    assert len(seq) == 10
    assert seq.boundary == 0
    assert seq.tokens[:3] == text.tokens
    assert seq.n_fillers == 7
    with pytest.raises(InsufficientDuration):
        build_inference_seq_x1(text, prompt_frames=1, gen_frames=1)


def test_lexicon_round_trip(tmp_path, vocab):
    lex = PronunciationLexicon({"ab": ("AH", "BH"), "c": ("CH",)}, vocab)
    assert "ab" in lex and "zz" not in lex
    assert lex.phonemes("ab") == ("AH", "BH")
    with pytest.raises(UnknownSymbol):
        lex.phonemes("zz")
    path = tmp_path / "lex.tsv"
    lex.save(path)
    loaded = PronunciationLexicon.load(path, vocab)
    assert loaded.words() == lex.words()
    assert loaded.phonemes("c") == ("CH",)


def test_lexicon_rejects_unregistered_phonemes(vocab):
    with pytest.raises(UnknownSymbol):
        PronunciationLexicon({"ab": ("ZZZ",)}, vocab)


def test_substitute_phonemes_all_or_nothing(vocab):
    lex = PronunciationLexicon({"ab": ("AH", "BH"), "cd": ("CH", "DH")}, vocab)
    t = parse_markup("ab cd", vocab)
    sub = substitute_phonemes(t, lex, 1.0, RngStream(0, 12))
    assert sub.to_markup() == "(AH BH) (CH DH)"
    same = substitute_phonemes(t, lex, 0.0, RngStream(0, 12))
    assert same.tokens == t.tokens


def test_substitute_phonemes_skips_unknown_and_mixed_words(vocab):
    lex = PronunciationLexicon({"ab": ("AH", "BH")}, vocab)
    t = parse_markup("ab qq (CH)d", vocab)
    sub = substitute_phonemes(t, lex, 1.0, RngStream(0, 12))
    # only "ab" is eligible: "qq" is absent, "(CH)d" already holds a phoneme
    assert sub.to_markup() == "(AH BH) qq (CH)d"


def test_substitute_phonemes_preserves_punctuation(vocab):
    lex = PronunciationLexicon({"ab": ("AH",)}, vocab)
    t = parse_markup("ab, cd!", vocab)
    sub = substitute_phonemes(t, lex, 1.0, RngStream(0, 12))
    assert sub.to_markup() == "(AH), cd!"


def test_substitute_phonemes_rate(vocab):
    lex = PronunciationLexicon({"ab": ("AH",), "cd": ("CH",)}, vocab)
    t = parse_markup("ab cd", vocab)
    rng = RngStream(123, 12)
    hits = 0
    n = 2000
    for _ in range(n):
        sub = substitute_phonemes(t, lex, 0.5, rng)
        hits += sum(tok.kind is TokenKind.PHONEME for tok in sub.tokens)
    # 2 eligible words per call, each replaced by one phoneme with p = 0.5
    rate = hits / (2 * n)
    assert abs(rate - 0.5) < 3 * np.sqrt(0.25 / (2 * n))
