"""Contiguous span masking for infilling training, frame- and word-aligned."""

from __future__ import annotations

from dataclasses import dataclass

from .exceptions import AlignmentError
from .features import SpanMask
from .rng import RngStream
from .text import Transcript
from .validation import check_fraction_range, check_positive_int

DEFAULT_MASK_LO = 0.7
DEFAULT_MASK_HI = 1.0


@dataclass(frozen=True)
class AlignSpan:
    """Frame range [start, end) belonging to token or word ``index``."""

    index: int
    start: int
    end: int


@dataclass(frozen=True)
class Alignment:
    """Sorted, non-overlapping spans covering [0, n_frames) with no gaps."""

    spans: tuple[AlignSpan, ...]

    def __post_init__(self):
        prev_end = 0
        for span in self.spans:
            if span.start != prev_end:
                raise AlignmentError(
                    f"span for index {span.index} starts at {span.start}, "
                    f"expected {prev_end} (alignments must tile the frame range)"
                )
            if span.end < span.start:
                raise AlignmentError(f"span for index {span.index} has negative length")
            prev_end = span.end

    def __len__(self) -> int:
        return len(self.spans)

    @property
    def n_frames(self) -> int:
        return self.spans[-1].end if self.spans else 0


def word_alignment(transcript: Transcript, char_align: Alignment) -> Alignment:
    """Word-level frame spans derived from a per-token alignment.

    Each word's span runs from its first token's frames to the next word's
    first frame, so spaces and punctuation attach to the preceding word and
    the spans still tile [0, n_frames). Frames before the first word (leading
    spaces) attach to the first word.
    """
    if len(char_align) != len(transcript):
        raise AlignmentError(
            f"alignment has {len(char_align)} spans for {len(transcript)} tokens"
        )
    if not transcript.word_spans:
        return Alignment(())
    starts = [char_align.spans[ws.start].start for ws in transcript.word_spans]
    starts[0] = 0
    ends = starts[1:] + [char_align.n_frames]
    return Alignment(
        tuple(
            AlignSpan(i, start, end)
            for i, (start, end) in enumerate(zip(starts, ends))
        )
    )


def _draw_span(n_frames: int, lo: float, hi: float, rng: RngStream) -> tuple[int, int]:
    fraction = rng.gen.uniform(lo, hi)
    length = int(round(fraction * n_frames))
    start = int(rng.gen.integers(0, n_frames - length + 1))
    return start, start + length


def sample_mask(
    n_frames: int,
    lo: float = DEFAULT_MASK_LO,
    hi: float = DEFAULT_MASK_HI,
    rng: RngStream | None = None,
) -> SpanMask:
    """Uniform contiguous mask covering a fraction of frames drawn from [lo, hi]."""
    n_frames = check_positive_int(n_frames, "n_frames")
    lo, hi = check_fraction_range(lo, hi, "mask fraction range")
    if rng is None:
        raise ValueError("an RngStream is required")
    start, end = _draw_span(n_frames, lo, hi, rng)
    return SpanMask.from_span(n_frames, start, end)


def sample_word_mask(
    n_frames: int,
    align: Alignment,
    transcript: Transcript,
    lo: float = DEFAULT_MASK_LO,
    hi: float = DEFAULT_MASK_HI,
    rng: RngStream | None = None,
) -> tuple[SpanMask, Transcript]:
    """Contiguous mask snapped outward to word boundaries.

    Draws a span exactly like :func:`sample_mask`, then widens it to the
    nearest enclosing word starts/ends from ``align`` (a word-level alignment
    over ``transcript.word_spans``). Returns the widened mask together with
    the transcript slice covering every fully masked word, interior spaces
    and punctuation included.
    """
    n_frames = check_positive_int(n_frames, "n_frames")
    lo, hi = check_fraction_range(lo, hi, "mask fraction range")
    if rng is None:
        raise ValueError("an RngStream is required")
    if not align.spans:
        raise AlignmentError("cannot word-snap a mask with an empty alignment")
    if align.n_frames != n_frames:
        raise AlignmentError(
            f"alignment covers {align.n_frames} frames, expected {n_frames}"
        )
    if len(align) > len(transcript.word_spans):
        raise AlignmentError("alignment has more spans than the transcript has words")

    start, end = _draw_span(n_frames, lo, hi, rng)
    if end == start:
        end = min(start + 1, n_frames)
        start = end - 1
    first = last = None
    for i, span in enumerate(align.spans):
        if span.start <= start:
            first = i
        if span.end >= end and last is None:
            last = i
    assert first is not None and last is not None
    if last < first:
        last = first  # degenerate draw inside a single word
    mask = SpanMask.from_span(n_frames, align.spans[first].start, align.spans[last].end)

    ws_first = transcript.word_spans[align.spans[first].index]
    ws_last = transcript.word_spans[align.spans[last].index]
    masked = transcript.slice_tokens(ws_first.start, ws_last.end)
    return mask, masked
