"""Probability path, target field, and the masked flow-matching loss."""

import numpy as np
import pytest
import torch

from flowinfill import (
    BackboneConfig,
    CfmConfig,
    FeatureSeq,
    MaskedExample,
    RngStream,
    ShapeMismatch,
    SingularFlowStep,
    SpanMask,
    build_field_model,
    build_training_seq,
    cfm_loss,
    cfm_loss_grads,
    drop_conditions,
    parse_markup,
    sample_path,
    target_field,
)
from flowinfill.rng import DROPOUT, FLOW_TIME, NOISE


def test_target_field_frozen_value():
    # sigma_min = 0, x0 = 1, x1 = 3, t = 0.5: x_t = 2 and u = (3 - 2) / 0.5 = 2
    x_t = np.array([[2.0]])
    x1 = np.array([[3.0]])
    assert target_field(x_t, x1, 0.5, sigma_min=0.0) == pytest.approx(2.0)


def test_target_field_is_path_derivative():
    # d/dt [t x1 + (1 - (1 - s) t) x0] = x1 - (1 - s) x0 must equal u(x_t, x1, t)
    rng = np.random.default_rng(0)
    sigma = 1e-5
    worst = 0.0
    for _ in range(1000):
        x0 = rng.standard_normal((4, 6))
        x1 = rng.standard_normal((4, 6))
        t = rng.uniform(0.0, 1.0 - 1e-5)
        x_t = t * x1 + (1.0 - (1.0 - sigma) * t) * x0
        u = target_field(x_t, x1, t, sigma_min=sigma)
        derivative = x1 - (1.0 - sigma) * x0
        worst = max(worst, np.max(np.abs(u - derivative)))
    assert worst <= 1e-12


def test_target_field_rejects_singular_time():
    x = np.zeros((2, 2))
    with pytest.raises(SingularFlowStep):
        target_field(x, x, 1.0, sigma_min=0.0)
    # with sigma_min > 0 the denominator at t = 1 is sigma_min, still usable
    target_field(x, x, 1.0, sigma_min=1e-3)


def test_target_field_shape_check():
    with pytest.raises(ShapeMismatch):
        target_field(np.zeros((2, 3)), np.zeros((2, 4)), 0.5)


def test_sample_path_moments():
    x1 = FeatureSeq(np.full((2, 3), 2.0))
    t, sigma = 0.4, 1e-5
    rng = RngStream(11, NOISE)
    draws = np.stack([sample_path(x1, t, rng, sigma).x_t.data for _ in range(2000)])
    n = draws.size
    mean_se = (1.0 - (1.0 - sigma) * t) / np.sqrt(n)
    assert abs(draws.mean() - t * 2.0) < 4 * mean_se
    expected_std = 1.0 - (1.0 - sigma) * t
    assert abs(draws.std() - expected_std) < 0.02


def test_sample_path_is_deterministic_per_stream():
    x1 = FeatureSeq(np.ones((3, 4)))
    a = sample_path(x1, 0.3, RngStream(5, NOISE))
    b = sample_path(x1, 0.3, RngStream(5, NOISE))
    assert np.array_equal(a.x_t.data, b.x_t.data)
    assert np.array_equal(a.x0.data, b.x0.data)


def test_drop_conditions_blanks_both_inputs(vocab):
    feats = FeatureSeq(np.ones((2, 4)))
    seq = build_training_seq(parse_markup("ab", vocab), 4)
    ctx, out_seq, fired = drop_conditions(feats, seq, 1.0, RngStream(0, DROPOUT))
    assert fired
    assert np.array_equal(ctx.data, np.zeros((2, 4)))
    assert out_seq.n_fillers == 4
    ctx, out_seq, fired = drop_conditions(feats, seq, 0.0, RngStream(0, DROPOUT))
    assert not fired
    assert ctx is feats and out_seq is seq


def test_drop_conditions_always_consumes_one_draw(vocab):
    # the next draw after the coin must not depend on prob
    feats = FeatureSeq(np.ones((2, 4)))
    seq = build_training_seq(parse_markup("ab", vocab), 4)
    rng_a = RngStream(3, DROPOUT)
    drop_conditions(feats, seq, 0.0, rng_a)
    after_a = rng_a.gen.random()
    rng_b = RngStream(3, DROPOUT)
    drop_conditions(feats, seq, 1.0, rng_b)
    after_b = rng_b.gen.random()
    assert after_a == after_b


def test_drop_conditions_rate(vocab):
    feats = FeatureSeq(np.ones((1, 2)))
    seq = build_training_seq(parse_markup("a", vocab), 2)
    rng = RngStream(21, DROPOUT)
    fires = sum(drop_conditions(feats, seq, 0.2, rng)[2] for _ in range(5000))
    rate = fires / 5000
    assert abs(rate - 0.2) < 4 * np.sqrt(0.2 * 0.8 / 5000)


def test_masked_example_shape_agreement(vocab):
    feats = FeatureSeq(np.ones((2, 5)))
    seq = build_training_seq(parse_markup("ab", vocab), 5)
    MaskedExample(feats, seq, SpanMask.from_span(5, 1, 4))
    with pytest.raises(ShapeMismatch):
        MaskedExample(feats, seq, SpanMask.from_span(6, 1, 4))
    with pytest.raises(ShapeMismatch):
        MaskedExample(feats, build_training_seq(parse_markup("ab", vocab), 4), SpanMask.from_span(5, 1, 4))


def _tiny_batch(vocab, n_frames=8, dim=3):
    rng = np.random.default_rng(42)
    batch = []
    for i, (text, frames) in enumerate([("ab", n_frames), ("cde", n_frames - 2)]):
        feats = FeatureSeq(rng.standard_normal((dim, frames)))
        seq = build_training_seq(parse_markup(text, vocab), frames)
        mask = SpanMask.from_span(frames, 1, frames - 1)
        batch.append(MaskedExample(feats, seq, mask))
    return batch


def test_cfm_loss_matches_direct_computation(vocab):
    # a model that always answers zero turns the loss into the masked mean of u^2
    batch = _tiny_batch(vocab)
    cfg = CfmConfig(sigma_min=1e-5, cond_drop_prob=0.0)

    def zero_model(audio, x_t, token_ids, times, lengths):
        return torch.zeros_like(x_t)

    loss = cfm_loss(batch, zero_model, cfg, RngStream(7, NOISE), RngStream(7, FLOW_TIME), RngStream(7, DROPOUT))

    time_rng = RngStream(7, FLOW_TIME)
    noise_rng = RngStream(7, NOISE)
    drop_rng = RngStream(7, DROPOUT)
    num = 0.0
    den = 0.0
    for ex in batch:
        time_rng.gen.uniform(0.0, cfg.t_max)
        x0 = noise_rng.gen.standard_normal(ex.feats.data.shape)
        drop_rng.gen.random()
        u = ex.feats.data - (1.0 - cfg.sigma_min) * x0
        bits = ex.mask.bits.astype(bool)
        num += float((u.T[bits] ** 2).sum())
        den += float(bits.sum() * ex.feats.feature_dim)
    assert float(loss) == pytest.approx(num / den, rel=1e-5)


def test_cfm_loss_ignores_unmasked_predictions(vocab):
    batch = _tiny_batch(vocab)
    cfg = CfmConfig(cond_drop_prob=0.0)

    def zero_model(audio, x_t, token_ids, times, lengths):
        return torch.zeros_like(x_t)

    def noisy_outside_mask(audio, x_t, token_ids, times, lengths):
        out = torch.zeros_like(x_t)
        out[:, 0, :] = 1e6  # frame 0 is unmasked in every example
        return out

    a = cfm_loss(batch, zero_model, cfg, RngStream(1, NOISE), RngStream(1, FLOW_TIME), RngStream(1, DROPOUT))
    b = cfm_loss(batch, noisy_outside_mask, cfg, RngStream(1, NOISE), RngStream(1, FLOW_TIME), RngStream(1, DROPOUT))
    assert float(a) == pytest.approx(float(b))


def test_cfm_loss_validation(vocab):
    cfg = CfmConfig()
    with pytest.raises(ValueError):
        cfm_loss([], lambda *a: None, cfg, RngStream(0, NOISE))
    feats = FeatureSeq(np.ones((2, 4)))
    seq = build_training_seq(parse_markup("ab", vocab), 4)
    empty_mask = MaskedExample(feats, seq, SpanMask.from_span(4, 2, 2))
    with pytest.raises(ValueError):
        cfm_loss(
            [empty_mask],
            lambda audio, x_t, ids, t, lengths: torch.zeros_like(x_t),
            cfg,
            RngStream(0, NOISE),
        )


def test_cfm_loss_gradients_match_finite_differences(vocab):
    config = BackboneConfig(
        vocab_size=vocab.size, feature_dim=3, char_embed_dim=8,
        embed_dim=16, ff_dim=32, layers=2, heads=2,
    )
    model = build_field_model(config, seed=0).double()
    batch = _tiny_batch(vocab)
    cfg = CfmConfig(cond_drop_prob=0.0)

    def fresh_loss():
        return cfm_loss(
            batch, model, cfg,
            RngStream(9, NOISE), RngStream(9, FLOW_TIME), RngStream(9, DROPOUT),
        )

    _, grads = cfm_loss_grads(
        batch, model, cfg,
        RngStream(9, NOISE), RngStream(9, FLOW_TIME), RngStream(9, DROPOUT),
    )
    params = dict(model.named_parameters())
    rng = np.random.default_rng(0)
    checked = 0
    with torch.no_grad():
        for name in sorted(grads):
            flat = params[name].view(-1)
            for _ in range(2):
                idx = int(rng.integers(flat.numel()))
                eps = 1e-6 * max(1.0, abs(float(flat[idx])))
                orig = float(flat[idx])
                flat[idx] = orig + eps
                up = float(fresh_loss())
                flat[idx] = orig - eps
                down = float(fresh_loss())
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                an = float(grads[name].reshape(-1)[idx])
                denom = max(1e-8, abs(fd) + abs(an))
                assert abs(fd - an) / denom < 1e-5, (name, idx, fd, an)
                checked += 1
    assert checked >= 20
