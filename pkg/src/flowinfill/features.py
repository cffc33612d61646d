"""Frame-level feature matrices and temporal span masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatch


@dataclass(frozen=True)
class FeatureSeq:
    """A D x T matrix: one D-dimensional feature vector per frame."""

    data: np.ndarray
    frame_hop: float = 0.01

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatch(f"feature matrix must be 2-d, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ShapeMismatch("feature dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite values")
        if self.frame_hop <= 0:
            raise ValueError(f"frame_hop must be > 0, got {self.frame_hop}")
        object.__setattr__(self, "data", arr)

    @property
    def feature_dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def slice_frames(self, start: int, end: int) -> "FeatureSeq":
        if not 0 <= start <= end <= self.n_frames:
            raise ShapeMismatch(
                f"frame slice [{start}, {end}) outside [0, {self.n_frames})"
            )
        return FeatureSeq(self.data[:, start:end].copy(), self.frame_hop)


@dataclass(frozen=True)
class SpanMask:
    """Binary temporal mask whose set bits form one contiguous span."""

    bits: np.ndarray
    span_start: int
    span_end: int

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ShapeMismatch("mask bits must be 1-d")
        if not 0 <= self.span_start <= self.span_end <= bits.size:
            raise ValueError(
                f"span [{self.span_start}, {self.span_end}) outside [0, {bits.size}]"
            )
        expected = np.zeros(bits.size, dtype=np.uint8)
        expected[self.span_start : self.span_end] = 1
        if not np.array_equal(bits, expected):
            raise ValueError("mask bits disagree with the declared span")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_span(cls, n_frames: int, start: int, end: int) -> "SpanMask":
        bits = np.zeros(n_frames, dtype=np.uint8)
        bits[start:end] = 1
        return cls(bits, start, end)

    @property
    def n_frames(self) -> int:
        return self.bits.size

    @property
    def masked_frames(self) -> int:
        return self.span_end - self.span_start

    def fraction(self) -> float:
        if self.n_frames == 0:
            return 0.0
        return self.masked_frames / self.n_frames


def broadcast_mask(mask: SpanMask, feature_dim: int) -> np.ndarray:
    """Repeat a frame mask down the feature axis, giving a D x T 0/1 matrix."""
    if feature_dim < 1:
        raise ShapeMismatch("feature_dim must be >= 1")
    return np.repeat(mask.bits[np.newaxis, :], feature_dim, axis=0).astype(np.float64)


def hadamard(mask_matrix: np.ndarray, feats: FeatureSeq) -> FeatureSeq:
    """Entrywise product of a D x T mask matrix with a feature matrix."""
    mask_matrix = np.asarray(mask_matrix, dtype=np.float64)
    if mask_matrix.shape != feats.data.shape:
        raise ShapeMismatch(
            f"mask shape {mask_matrix.shape} != feature shape {feats.data.shape}"
        )
    return FeatureSeq(mask_matrix * feats.data, feats.frame_hop)
