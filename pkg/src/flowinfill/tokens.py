"""Token vocabulary: characters, phoneme symbols, and the filler token."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .exceptions import UnknownSymbol, VocabularyError

FILLER_SURFACE = "<F>"


class TokenKind(Enum):
    CHAR = "char"
    PHONEME = "phoneme"
    FILLER = "filler"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    id: int

    def __post_init__(self):
        if self.id < 0:
            raise VocabularyError(f"token id must be >= 0, got {self.id}")
        if self.kind is TokenKind.FILLER and self.id != 0:
            raise VocabularyError("the filler token always has id 0")


FILLER = Token(TokenKind.FILLER, 0)


class Vocabulary:
    """Bijective registry of characters and phoneme symbols.

    Id layout: filler = 0, characters 1..n_chars, phonemes n_chars+1 onward.
    Characters are single codepoints; phoneme symbols are short uppercase strings.
    """

    def __init__(self, chars: Sequence[str], phonemes: Sequence[str] = ()):
        chars = list(chars)
        phonemes = list(phonemes)
        for c in chars:
            if len(c) != 1:
                raise VocabularyError(f"characters must be single codepoints, got {c!r}")
        if len(set(chars)) != len(chars):
            raise VocabularyError("duplicate character in vocabulary")
        if len(set(phonemes)) != len(phonemes):
            raise VocabularyError("duplicate phoneme symbol in vocabulary")
        if set(chars) & set(phonemes):
            raise VocabularyError("character and phoneme surfaces must not collide")
        for p in phonemes:
            if not p or any(ch.isspace() or ch in "()" for ch in p):
                raise VocabularyError(f"bad phoneme symbol {p!r}")
        self.filler_id = 0
        self._char_ids = {c: i + 1 for i, c in enumerate(chars)}
        base = 1 + len(chars)
        self._phoneme_ids = {p: base + i for i, p in enumerate(phonemes)}
        self._surfaces = {0: FILLER_SURFACE}
        self._surfaces.update({v: k for k, v in self._char_ids.items()})
        self._surfaces.update({v: k for k, v in self._phoneme_ids.items()})
        self._n_chars = len(chars)
        self._n_phonemes = len(phonemes)

    @property
    def size(self) -> int:
        return 1 + self._n_chars + self._n_phonemes

    @property
    def chars(self) -> tuple[str, ...]:
        return tuple(self._char_ids)

    @property
    def phonemes(self) -> tuple[str, ...]:
        return tuple(self._phoneme_ids)

    def filler(self) -> Token:
        return FILLER

    def char(self, c: str) -> Token:
        try:
            return Token(TokenKind.CHAR, self._char_ids[c])
        except KeyError:
            raise VocabularyError(f"character {c!r} is not in the vocabulary") from None

    def phoneme(self, symbol: str) -> Token:
        try:
            return Token(TokenKind.PHONEME, self._phoneme_ids[symbol])
        except KeyError:
            raise UnknownSymbol(f"phoneme symbol {symbol!r} is not registered") from None

    def has_char(self, c: str) -> bool:
        return c in self._char_ids

    def surface(self, token: Token) -> str:
        try:
            return self._surfaces[token.id]
        except KeyError:
            raise VocabularyError(f"token id {token.id} outside vocabulary") from None

    def token_from_id(self, token_id: int) -> Token:
        if token_id == 0:
            return FILLER
        if 1 <= token_id <= self._n_chars:
            return Token(TokenKind.CHAR, token_id)
        if token_id < self.size:
            return Token(TokenKind.PHONEME, token_id)
        raise VocabularyError(f"token id {token_id} outside vocabulary")


@dataclass(frozen=True)
class ExtendedCharSeq:
    """Token sequence padded with fillers to a fixed frame count.

    ``boundary`` optionally records where prompt tokens end and target-text
    tokens begin; fillers may only appear as a contiguous suffix.
    """

    tokens: tuple[Token, ...]
    boundary: int | None = None

    def __post_init__(self):
        seen_filler = False
        for tok in self.tokens:
            if tok.kind is TokenKind.FILLER:
                seen_filler = True
            elif seen_filler:
                raise ValueError("filler tokens must form a contiguous suffix")
        if self.boundary is not None and not 0 <= self.boundary <= len(self.tokens):
            raise ValueError(f"boundary {self.boundary} outside [0, {len(self.tokens)}]")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_fillers(self) -> int:
        return sum(1 for t in self.tokens if t.kind is TokenKind.FILLER)

    def ids(self) -> np.ndarray:
        return np.array([t.id for t in self.tokens], dtype=np.int64)

    def all_filler(self) -> "ExtendedCharSeq":
        """Unconditional twin: same length, every token replaced by the filler."""
        return ExtendedCharSeq((FILLER,) * len(self.tokens), boundary=self.boundary)


# --- Toy vocabulary -------------------------------------------------------
#
# The synthetic benchmark uses at most 15 letters plus space; the extra
# letters and punctuation keep the vocabulary a strict superset of every
# toy corpus so one model config covers all of them.

TOY_LETTERS = "abcdefghijklmno"
TOY_EXTRA_CHARS = "pqrst"
TOY_PUNCT = ".,!?;:'\"-"
TOY_SPARE_PHONEMES = ("PH", "QH", "RH", "SH", "TH")


def toy_phoneme_for(letter: str) -> str:
    if letter not in TOY_LETTERS:
        raise VocabularyError(f"no toy phoneme for {letter!r}")
    return letter.upper() + "H"


def toy_vocabulary() -> Vocabulary:
    chars = list(TOY_LETTERS) + [" "] + list(TOY_EXTRA_CHARS) + list(TOY_PUNCT)
    phonemes = [toy_phoneme_for(c) for c in TOY_LETTERS] + list(TOY_SPARE_PHONEMES)
    return Vocabulary(chars, phonemes)


def tokens_to_ids(tokens: Iterable[Token]) -> np.ndarray:
    return np.array([t.id for t in tokens], dtype=np.int64)
