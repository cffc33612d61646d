"""Transformer field model: shapes, padding behavior, and parameter accounting."""

import numpy as np
import pytest
import torch

from flowinfill import (
    BackboneConfig,
    ConfigError,
    FeatureSeq,
    ShapeMismatch,
    VocabularyError,
    build_field_model,
    build_training_seq,
    parse_markup,
)
from flowinfill.backbone import desk_config, full_scale_config


def _tiny_config(vocab, **overrides):
    base = dict(
        vocab_size=vocab.size, feature_dim=4, char_embed_dim=8,
        embed_dim=16, ff_dim=32, layers=2, heads=2,
    )
    base.update(overrides)
    return BackboneConfig(**base)


def test_config_validation(vocab):
    with pytest.raises(ConfigError):
        _tiny_config(vocab, layers=3)  # odd
    with pytest.raises(ConfigError):
        _tiny_config(vocab, layers=0)
    with pytest.raises(ConfigError):
        _tiny_config(vocab, embed_dim=18, heads=4)  # not divisible
    with pytest.raises(ConfigError):
        _tiny_config(vocab, embed_dim=18, heads=6)  # odd head dim
    with pytest.raises(ConfigError):
        _tiny_config(vocab, position="learned")
    with pytest.raises(ConfigError):
        BackboneConfig(vocab_size=1)


def test_param_count_matches_closed_form(vocab):
    for config in [
        _tiny_config(vocab),
        _tiny_config(vocab, layers=4, embed_dim=32, ff_dim=64, heads=4),
        desk_config(vocab.size),
    ]:
        model = build_field_model(config, seed=0)
        assert model.param_count == config.expected_param_count()


def test_desk_preset_is_about_one_million_params(vocab):
    config = desk_config(vocab.size)
    # frozen: 51-token vocabulary, D=16, width 128, FF 640, 4 layers
    assert config.expected_param_count() == 1_041_488
    assert 1_000_000 <= config.expected_param_count() <= 2_000_000


def test_full_scale_preset_exists(vocab):
    config = full_scale_config(vocab.size)
    assert config.layers == 24
    assert config.expected_param_count() > 100_000_000


def test_build_is_deterministic(vocab):
    config = _tiny_config(vocab)
    a = build_field_model(config, seed=3)
    b = build_field_model(config, seed=3)
    c = build_field_model(config, seed=4)
    pa = torch.cat([p.flatten() for p in a.parameters()])
    pb = torch.cat([p.flatten() for p in b.parameters()])
    pc = torch.cat([p.flatten() for p in c.parameters()])
    assert torch.equal(pa, pb)
    assert not torch.equal(pa, pc)


def _random_inputs(config, lengths, seed=0):
    rng = np.random.default_rng(seed)
    b = len(lengths)
    t_pad = max(lengths)
    d = config.feature_dim
    audio = torch.zeros(b, t_pad, d)
    x_t = torch.zeros(b, t_pad, d)
    ids = torch.zeros(b, t_pad, dtype=torch.long)
    for i, n in enumerate(lengths):
        audio[i, :n] = torch.from_numpy(rng.standard_normal((n, d))).float()
        x_t[i, :n] = torch.from_numpy(rng.standard_normal((n, d))).float()
        ids[i, :n] = torch.from_numpy(rng.integers(0, config.vocab_size, n))
    t = torch.from_numpy(rng.uniform(0, 0.99, b)).float()
    return audio, x_t, ids, t, torch.tensor(lengths)


def test_forward_shape_and_finiteness(vocab):
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [6, 9])
    with torch.no_grad():
        out = model(audio, x_t, ids, t, lengths)
    assert out.shape == (2, 9, config.feature_dim)
    assert torch.isfinite(out[0, :6]).all() and torch.isfinite(out[1]).all()


def test_forward_input_validation(vocab):
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [5, 5])
    with pytest.raises(ShapeMismatch):
        model(audio, x_t, ids[:, :4], t, lengths)
    with pytest.raises(VocabularyError):
        bad = ids.clone()
        bad[0, 0] = config.vocab_size
        model(audio, x_t, bad, t, lengths)
    with pytest.raises(ShapeMismatch):
        model(audio, x_t, ids, t, torch.tensor([5, 6]))


def test_padding_does_not_leak_into_shorter_samples(vocab):
    # the same sample padded to different widths must produce the same output
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=1).eval()
    audio, x_t, ids, t, _ = _random_inputs(config, [7, 7], seed=3)
    with torch.no_grad():
        alone = model(audio[:1], x_t[:1], ids[:1], t[:1], torch.tensor([7]))
        widened = model(
            torch.cat([audio[:1], torch.full((1, 5, config.feature_dim), 9.0)], dim=1),
            torch.cat([x_t[:1], torch.full((1, 5, config.feature_dim), 9.0)], dim=1),
            torch.cat([ids[:1], torch.zeros(1, 5, dtype=torch.long)], dim=1),
            t[:1],
            torch.tensor([7]),
        )
    assert torch.allclose(alone, widened[:, :7], atol=1e-5)


def test_batched_forward_matches_single_sequence_path(vocab):
    # the sampler's numpy path and the trainer's batched path share the trunk
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=2).eval()
    rng = np.random.default_rng(7)
    n = 9
    d = config.feature_dim
    audio_np = rng.standard_normal((d, n))
    x_t_np = rng.standard_normal((d, n))
    seq = build_training_seq(parse_markup("ab c", vocab), n)
    t_val = 0.37

    y_emb = model.embed_text(seq)
    assembled = model.assemble_input(
        FeatureSeq(audio_np), FeatureSeq(x_t_np), y_emb, t_val
    )
    single = model.forward_assembled(assembled)

    audio = torch.from_numpy(audio_np.T).float()[None]
    x_t = torch.from_numpy(x_t_np.T).float()[None]
    ids = torch.from_numpy(seq.ids())[None]
    with torch.no_grad():
        batched = model(audio, x_t, ids, torch.tensor([t_val]), torch.tensor([n]))
    assert np.allclose(single, batched[0].T.numpy(), atol=1e-5)


def test_time_embedding_column_is_used(vocab):
    # changing t must change the output; the flow step enters via the extra column
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [6])
    with torch.no_grad():
        a = model(audio, x_t, ids, t, lengths)
        b = model(audio, x_t, ids, t + 0.3, lengths)
    assert not torch.allclose(a, b)


def test_token_ids_affect_output(vocab):
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [6])
    other = ids.clone()
    other[0, 2] = (int(other[0, 2]) + 1) % config.vocab_size
    with torch.no_grad():
        a = model(audio, x_t, ids, t, lengths)
        b = model(audio, x_t, other, t, lengths)
    assert not torch.allclose(a, b)


def test_skip_connections_are_live(vocab):
    # zeroing a first-half block's contribution must change the second half's input
    config = _tiny_config(vocab, layers=4)
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [5])
    with torch.no_grad():
        base = model(audio, x_t, ids, t, lengths)
        for proj in model.skip_projs:
            proj.weight.zero_()
            proj.bias.zero_()
        ablated = model(audio, x_t, ids, t, lengths)
    assert not torch.allclose(base, ablated)


def test_sinusoidal_position_variant_runs(vocab):
    config = _tiny_config(vocab, position="sinusoidal")
    model = build_field_model(config, seed=0).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [6, 4])
    with torch.no_grad():
        out = model(audio, x_t, ids, t, lengths)
    assert out.shape == (2, 6, config.feature_dim)


def test_position_sensitivity(vocab):
    # swapping two frames must change the output at those frames (RoPE is on)
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=5).eval()
    audio, x_t, ids, t, lengths = _random_inputs(config, [8], seed=11)
    perm_audio = audio.clone()
    perm_audio[0, [1, 5]] = perm_audio[0, [5, 1]]
    perm_xt = x_t.clone()
    perm_xt[0, [1, 5]] = perm_xt[0, [5, 1]]
    perm_ids = ids.clone()
    perm_ids[0, [1, 5]] = perm_ids[0, [5, 1]]
    with torch.no_grad():
        a = model(audio, x_t, ids, t, lengths)
        b = model(perm_audio, perm_xt, perm_ids, t, lengths)
    # if attention were position-free, b would just be a with rows swapped
    swapped = a.clone()
    swapped[0, [1, 5]] = swapped[0, [5, 1]]
    assert not torch.allclose(b, swapped, atol=1e-6)


def test_assemble_input_validation(vocab):
    config = _tiny_config(vocab)
    model = build_field_model(config, seed=0)
    d = config.feature_dim
    good_audio = FeatureSeq(np.zeros((d, 5)))
    y = np.zeros((config.char_embed_dim, 5))
    with pytest.raises(ShapeMismatch):
        model.assemble_input(FeatureSeq(np.zeros((d + 1, 5))), good_audio, y, 0.5)
    with pytest.raises(ShapeMismatch):
        model.assemble_input(good_audio, FeatureSeq(np.zeros((d, 4))), y, 0.5)
    with pytest.raises(ShapeMismatch):
        model.forward_assembled(np.zeros((config.embed_dim + 1, 6)))
