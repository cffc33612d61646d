"""Feature matrices, span masks, and masking algebra."""

import numpy as np
import pytest

from flowinfill import FeatureSeq, ShapeMismatch, SpanMask, broadcast_mask, hadamard


def test_feature_seq_coerces_to_float64():
    f = FeatureSeq(np.ones((3, 5), dtype=np.float32))
    assert f.data.dtype == np.float64
    assert f.feature_dim == 3
    assert f.n_frames == 5


def test_feature_seq_validation():
    with pytest.raises(ShapeMismatch):
        FeatureSeq(np.ones(4))
    with pytest.raises(ShapeMismatch):
        FeatureSeq(np.ones((0, 4)))
    with pytest.raises(ValueError):
        FeatureSeq(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        FeatureSeq(np.ones((2, 2)), frame_hop=0.0)


def test_slice_frames():
    f = FeatureSeq(np.arange(12).reshape(2, 6).astype(float))
    s = f.slice_frames(2, 5)
    assert s.n_frames == 3
    assert np.array_equal(s.data, [[2, 3, 4], [8, 9, 10]])
    # copies, not views
    s.data[0, 0] = -1
    assert f.data[0, 2] == 2
    with pytest.raises(ShapeMismatch):
        f.slice_frames(4, 9)


def test_span_mask_construction():
    m = SpanMask.from_span(10, 3, 7)
    assert m.n_frames == 10
    assert m.masked_frames == 4
    assert m.fraction() == pytest.approx(0.4)
    assert np.array_equal(m.bits, [0, 0, 0, 1, 1, 1, 1, 0, 0, 0])


def test_span_mask_rejects_noncontiguous_bits():
    bits = np.array([1, 0, 1, 0], dtype=np.uint8)
    with pytest.raises(ValueError):
        SpanMask(bits, 0, 3)
    with pytest.raises(ValueError):
        SpanMask(np.ones(4, dtype=np.uint8), 0, 3)  # bits disagree with span
    with pytest.raises(ValueError):
        SpanMask(np.zeros(4, dtype=np.uint8), 2, 6)  # span outside range


def test_empty_span_allowed():
    m = SpanMask.from_span(5, 2, 2)
    assert m.masked_frames == 0
    assert m.fraction() == 0.0


def test_broadcast_and_hadamard():
    m = SpanMask.from_span(4, 1, 3)
    mat = broadcast_mask(m, 3)
    assert mat.shape == (3, 4)
    assert np.array_equal(mat[0], [0, 1, 1, 0])
    f = FeatureSeq(np.full((3, 4), 2.0))
    kept = hadamard(1.0 - mat, f)
    assert np.array_equal(kept.data[0], [2, 0, 0, 2])
    with pytest.raises(ShapeMismatch):
        hadamard(np.ones((2, 4)), f)
