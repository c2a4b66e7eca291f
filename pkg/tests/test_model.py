import math

import numpy as np
import pytest
import torch

from mathrec.errors import (
    ConfigError,
    DisabledModule,
    NonFiniteLoss,
    SequenceTooLong,
    ShapeError,
    ShapeMismatch,
)
from mathrec.model import (
    FormulaRecognizer,
    LossWeights,
    ModelConfig,
    beam_search,
    generate,
    greedy_decode,
    language_modeling_loss,
    length_loss,
    preprocess,
    smooth_l1,
    total_loss,
)
from mathrec.model.decoding import sequence_score
from mathrec.model.encoder import _window_mask

from conftest import TINY_MODEL


def tiny(**overrides) -> FormulaRecognizer:
    torch.manual_seed(0)
    return FormulaRecognizer(ModelConfig(vocab_size=12, **{**TINY_MODEL, **overrides})).eval()


def images(b=2, seed=0, canvas=(32, 128)):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(b, 3, *canvas, generator=g)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=3)
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, canvas=(30, 128))
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, feature_dim=100, decoder_heads=8)
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, length_target="mean")
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_dict({"vocab_size": 10, "hidden": 3})
    cfg = ModelConfig(vocab_size=10, **TINY_MODEL)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.stage_dims == (16, 32)
    assert ModelConfig(vocab_size=10).stage_dims == (32, 64, 128, 256)


def test_encoder_output_shape():
    model = tiny()
    z = model.encode(images())
    assert z.shape == (2, model.config.num_patches, 32)
    with pytest.raises(ShapeError):
        model.encode(torch.zeros(2, 1, 32, 128))
    with pytest.raises(ShapeError):
        model.encode(torch.zeros(2, 3, 64, 128))


def test_default_desk_encoder_shape():
    torch.manual_seed(0)
    cfg = ModelConfig(vocab_size=20, canvas=(64, 256), max_sequence_length=16)
    z = FormulaRecognizer(cfg).eval().encode(torch.zeros(1, 3, 64, 256))
    assert z.shape == (1, 2 * 8, 256)


def test_window_mask_blocks_padding_and_shift_regions():
    mask = _window_mask(5, 5, 4, 4, 0, 0)
    # 5x5 padded to 8x8: the first window holds 16 real tokens, nothing masked
    assert (mask[0] == 0).all()
    # the last window has only one real token; every query may only see it
    allowed = mask[3] == 0
    assert allowed.sum(-1).eq(1).all()
    assert _window_mask(8, 8, 4, 4, 0, 0) is None
    shifted = _window_mask(8, 8, 4, 4, 2, 2)
    assert shifted is not None and (shifted[0] == 0).all()


def test_padded_tokens_do_not_leak():
    torch.manual_seed(0)
    model = tiny(canvas=(32, 96))  # 3x... feature maps that need padding
    x = images(1, canvas=(32, 96))
    z1 = model.encode(x)
    assert torch.isfinite(z1).all()


def test_forward_shapes_and_lam_off():
    model = tiny()
    ids = torch.randint(0, 12, (2, 7))
    logits, counts = model(images(), ids)
    assert logits.shape == (2, 7, 12) and counts.shape == (2, 12)
    off = tiny(lam_enabled=False)
    logits, counts = off(images(), ids)
    assert counts is None and logits.shape == (2, 7, 12)
    with pytest.raises(DisabledModule):
        off.lam_forward(off.encode(images()))
    with pytest.raises(ShapeError):
        model.lam_forward(torch.zeros(2, 16))


def test_sequence_too_long():
    model = tiny(max_sequence_length=8)
    with pytest.raises(SequenceTooLong):
        model(images(), torch.zeros(2, 9, dtype=torch.long))


def test_count_head_trained_only_by_length_loss():
    model = tiny().train()
    ids = torch.randint(4, 12, (2, 6))
    logits, counts = model(images(), ids)
    language_modeling_loss(logits, ids).backward()
    head = model.lam.count_head
    assert head.weight.grad is None or head.weight.grad.abs().sum() == 0
    assert model.lam.embed[0].weight.grad.abs().sum() > 0
    assert model.encoder.patch_embed.weight.grad.abs().sum() > 0
    model.zero_grad()
    logits, counts = model(images(), ids)
    length_loss(counts, torch.ones_like(counts)).backward()
    assert head.weight.grad.abs().sum() > 0
    assert model.lam.embed[0].weight.grad is None or model.lam.embed[0].weight.grad.abs().sum() == 0


def test_preprocess_places_and_standardizes():
    img = np.full((20, 40, 3), 255, np.uint8)
    img[5:15, 5:35] = 0
    x = preprocess(img, (32, 128))
    assert x.shape == (3, 32, 128)
    assert torch.allclose(x.mean(dim=(1, 2)), torch.zeros(3), atol=1e-5)
    big = np.zeros((100, 1000, 3), np.uint8)
    big[:, ::2] = 255
    assert preprocess(big, (32, 128)).shape == (3, 32, 128)
    with pytest.raises(ShapeError):
        preprocess(np.zeros((10, 10), np.uint8), (32, 128))


def test_losses_edge_cases():
    logits = torch.randn(1, 3, 5)
    zero = language_modeling_loss(logits, torch.zeros(1, 3, dtype=torch.long))
    assert float(zero) == 0.0
    with pytest.raises(ShapeMismatch):
        language_modeling_loss(logits, torch.zeros(1, 4, dtype=torch.long))
    with pytest.raises(ShapeMismatch):
        length_loss(torch.zeros(2, 3), torch.zeros(2, 4))
    with pytest.raises(NonFiniteLoss):
        total_loss(torch.tensor(float("nan")), torch.tensor(1.0))
    with pytest.raises(ConfigError):
        LossWeights(lm=-1.0)
    assert float(total_loss(torch.tensor(2.0), None)) == 2.0
    r = torch.tensor([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert smooth_l1(r).tolist() == [2.5, 0.125, 0.0, 0.125, 2.5]


def test_lm_loss_ignores_padding():
    torch.manual_seed(1)
    logits = torch.randn(1, 4, 6)
    targets = torch.tensor([[4, 5, 0, 0]])
    expected = -(torch.log_softmax(logits[0, :2], -1)[[0, 1], [4, 5]]).mean()
    assert math.isclose(float(language_modeling_loss(logits, targets)), float(expected), rel_tol=1e-6)


def test_greedy_and_beam():
    model = tiny()
    x = images(3)
    hyps = greedy_decode(model, x, max_len=6)
    assert len(hyps) == 3
    for h, image in zip(hyps, x):
        assert len(h.tokens) <= 6
        assert h.truncated == (len(h.tokens) == 6)
        assert math.isclose(h.score, sequence_score(model, image, h.tokens, not h.truncated),
                            rel_tol=1e-5)
        # beam vs greedy on the same single-image input
        single = greedy_decode(model, image[None], max_len=6)[0]
        best = beam_search(model, image, max_len=6, beam=3)
        assert best.score >= single.score
        assert math.isclose(best.score, sequence_score(model, image, best.tokens, not best.truncated),
                            rel_tol=1e-5)


def test_generate_restores_mode_and_is_deterministic():
    model = tiny().train()
    x = images(1)[0]
    a = generate(model, x, max_len=5, beam=2)
    b = generate(model, x, max_len=5, beam=2)
    assert model.training
    assert a == b
    assert generate(model, x, max_len=0).tokens == []


def test_memory_position_breaks_translation_symmetry():
    blank = torch.zeros(1, 3, 32, 128)
    plain = tiny(memory_position=False).encode(blank)[0]
    # a constant image gives identical features at every location without the position code
    assert torch.allclose(plain, plain[:1].expand_as(plain), atol=1e-5)
    placed = tiny().encode(blank)[0]
    assert torch.cdist(placed, placed).fill_diagonal_(1.0).min() > 1e-3
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, feature_dim=18, encoder_depths=(1, 1), encoder_heads=(1, 1),
                    decoder_heads=2, lam_heads=2)
