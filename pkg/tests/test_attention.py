import numpy as np
import pytest

from cmfnet.attention import (AttentionBlock, AttentionKind, ChannelAttention, PixelAttention,
                              SpatialAttention, make_attention)
from cmfnet.tensor import Tensor
from cmfnet.verify import BLOCK_TOL, check_block

KINDS = list(AttentionKind)


def _gate(kind, channels=8, seed=0):
    return make_attention(kind, channels, rng=np.random.default_rng(seed))


@pytest.mark.parametrize("kind", KINDS)
def test_zero_parameters_give_half_gate(kind, rng):
    gate = _gate(kind)
    gate.zero_()
    x = rng.standard_normal((2, 8, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(gate(Tensor(x)).data, 0.5 * x)


@pytest.mark.parametrize("kind", KINDS)
def test_zero_input_gives_zero(kind):
    x = Tensor(np.zeros((1, 8, 4, 4), dtype=np.float32))
    assert not _gate(kind)(x).data.any()


@pytest.mark.parametrize("kind, shape", [
    (AttentionKind.CHANNEL, (2, 8, 1, 1)),
    (AttentionKind.SPATIAL, (2, 1, 6, 5)),
    (AttentionKind.PIXEL, (2, 8, 6, 5)),
])
def test_mask_shape_and_range(kind, shape, rng):
    gate = _gate(kind)
    for p in gate.parameters():
        p.data = rng.normal(0, 1, p.shape).astype(np.float32)
    m = gate.mask(Tensor(rng.standard_normal((2, 8, 6, 5)).astype(np.float32))).data
    assert m.shape == shape
    assert np.all((m >= 0) & (m <= 1))


@pytest.mark.parametrize("kind", KINDS)
def test_saturated_gate_passes_input(kind, rng):
    gate = _gate(kind)
    gate.zero_()
    last = gate.conv if kind is AttentionKind.SPATIAL else gate.up
    last.bias.data[:] = 30.0
    x = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    np.testing.assert_allclose(gate(Tensor(x)).data, x, rtol=1e-12, atol=0)


def test_channel_and_pixel_gates_have_equal_parameter_counts():
    for c in (4, 8, 16):
        assert ChannelAttention(c).num_parameters() == PixelAttention(c).num_parameters()
    assert ChannelAttention(8).num_parameters() == 2 * 8 * 2 + 2 + 8
    assert SpatialAttention(8).num_parameters() == 2 * 25 + 1


@pytest.mark.parametrize("channels", [2, 6])
def test_bad_reduction_rejected(channels):
    with pytest.raises(ValueError):
        ChannelAttention(channels, reduction=4)
    with pytest.raises(ValueError):
        PixelAttention(channels, reduction=4)
    SpatialAttention(channels)


@pytest.mark.parametrize("kind", KINDS)
def test_block_with_zero_body_is_identity(kind, rng):
    block = AttentionBlock(8, kind, rng=rng)
    block.conv2.weight.data[:] = 0
    block.conv2.bias.data[:] = 0
    x = rng.standard_normal((1, 8, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(block(Tensor(x)).data, x)


@pytest.mark.parametrize("kind", KINDS)
def test_block_fixes_zero_input_when_biases_vanish(kind, rng):
    block = AttentionBlock(8, kind, rng=rng)
    block.conv1.bias.data[:] = 0
    block.conv2.bias.data[:] = 0
    x = Tensor(np.zeros((1, 8, 4, 4), dtype=np.float32))
    assert not block(x).data.any()


@pytest.mark.parametrize("kind", KINDS)
def test_block_shape_preserved(kind, rng):
    x = Tensor(rng.standard_normal((2, 8, 10, 6)).astype(np.float32))
    assert AttentionBlock(8, kind, rng=rng)(x).shape == x.shape


@pytest.mark.parametrize("kind", KINDS)
def test_block_gradients(kind):
    assert check_block(kind) < BLOCK_TOL


def test_kind_letters():
    assert [k.letter for k in KINDS] == ["c", "p", "s"]
    assert AttentionKind.from_letter("P") is AttentionKind.PIXEL
    with pytest.raises(ValueError):
        AttentionKind.from_letter("x")
