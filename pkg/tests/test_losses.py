import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmfnet import losses
from cmfnet.gradcheck import grad_check
from cmfnet.losses import (LossConfig, Protocol, SsimConfig, edge_loss, evaluate_pair, gaussian_window,
                           laplacian, loss_components, ps_loss, psnr, rgb_to_ycbcr, ssim, total_loss)
from cmfnet.tensor import ShapeError, Tensor
from cmfnet.verify import BLOCK_TOL, check_edge_loss, check_ps_loss, check_total_loss

from oracles import direct_ssim


# -- PSNR ---------------------------------------------------------------------------
def test_psnr_examples():
    x = np.zeros((3, 8, 8))
    assert psnr(x, x) == 120.0
    assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(x, x + 1.0) == pytest.approx(0.0, abs=1e-12)
    assert psnr(x, x + 25.5, peak=255.0) == pytest.approx(20.0, abs=1e-9)


def test_psnr_rejects_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_differentiable_psnr_matches_float_version(rng):
    x, y = rng.random((1, 3, 12, 12)), rng.random((1, 3, 12, 12))
    assert losses.psnr_index(Tensor(x), Tensor(y)).item() == pytest.approx(psnr(x, y), rel=1e-12)


# -- SSIM ---------------------------------------------------------------------------
def test_gaussian_window():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[5, 5] == w.max()
    np.testing.assert_array_equal(w, w.T)


def test_ssim_identity_is_exactly_one(rng):
    x = rng.random((3, 32, 32))
    assert ssim(x, x) == 1.0


def test_ssim_constant_images():
    c1 = SsimConfig().c1
    assert ssim(np.ones((1, 16, 16)), np.zeros((1, 16, 16))) == pytest.approx(c1 / (1 + c1), abs=1e-9)


def test_ssim_symmetric(rng):
    x, y = rng.random((3, 20, 20)), rng.random((3, 20, 20))
    assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-15)


def test_ssim_matches_direct_formula():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.random((3, 32, 32))
        y = np.clip(x + rng.normal(0, rng.uniform(0.01, 0.5), x.shape), 0, 1)
        assert ssim(x, y) == pytest.approx(direct_ssim(x, y), abs=1e-6)


def test_ssim_too_small_rejected():
    with pytest.raises(ShapeError):
        ssim(np.zeros((1, 8, 8)), np.zeros((1, 8, 8)))


# -- losses -----------------------------------------------------------------------------
def test_ps_loss_formula(monkeypatch):
    monkeypatch.setattr(losses, "ssim_index", lambda x, y: Tensor(np.float64(0.5)))
    monkeypatch.setattr(losses, "psnr_index", lambda x, y: Tensor(np.float64(20.0)))
    x = Tensor(np.zeros((1, 3, 16, 16)))
    assert ps_loss(x, x).item() == pytest.approx(0.5 / 20.005, rel=1e-15)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_loss_fixpoints(dtype, rng):
    x = Tensor(rng.random((2, 3, 16, 16)).astype(dtype))
    assert ps_loss(x, x).item() == 0.0
    assert edge_loss(x, x).item() == pytest.approx(1e-3, abs=1e-9)
    assert total_loss(x, x).item() == pytest.approx(5e-5, abs=1e-9)


def test_laplacian_impulse():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    lap = laplacian(Tensor(x)).data[0, 0]
    expected = np.zeros((5, 5))
    expected[2, 2] = -4
    expected[1, 2] = expected[3, 2] = expected[2, 1] = expected[2, 3] = 1
    np.testing.assert_array_equal(lap, expected)


def test_laplacian_zero_padding_at_border():
    lap = laplacian(Tensor(np.ones((1, 1, 3, 3)))).data[0, 0]
    np.testing.assert_array_equal(lap, [[-2, -1, -2], [-1, 0, -1], [-2, -1, -2]])


def test_l1_variant():
    x, y = np.zeros((1, 3, 16, 16)), np.full((1, 3, 16, 16), 0.25)
    cfg = LossConfig(kind="l1")
    parts = loss_components(Tensor(x), Tensor(y), cfg)
    assert parts["main"].item() == pytest.approx(0.25)
    assert parts["total"].item() == pytest.approx(0.25 + 0.05 * parts["edge"].item())


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(omega=0.0)
    with pytest.raises(ValueError):
        LossConfig(kind="l2")


def test_loss_gradients():
    assert check_ps_loss() < BLOCK_TOL
    assert check_edge_loss() < BLOCK_TOL
    assert check_total_loss() < BLOCK_TOL


def test_l1_variant_gradient(rng):
    y = Tensor(rng.random((1, 3, 12, 12)))
    x = Tensor(np.clip(y.data + rng.choice([-0.1, 0.1], y.shape), 0, 1))
    assert grad_check(lambda a: total_loss(a, y, LossConfig(kind="l1")), [x]) < BLOCK_TOL


def test_losses_finite_on_random_pairs():
    rng = np.random.default_rng(0)
    for i in range(1000):
        kind = i % 4
        y = rng.random((1, 3, 12, 12)).astype(np.float32)
        if kind == 0:
            x = y.copy()
        elif kind == 1:
            x = np.zeros_like(y)
        elif kind == 2:
            x = np.full_like(y, float(rng.integers(0, 2)))
        else:
            x = rng.random(y.shape).astype(np.float32)
        xt = Tensor(x, requires_grad=True)
        loss = total_loss(xt, Tensor(y))
        loss.backward()
        assert np.isfinite(loss.item()), i
        assert np.all(np.isfinite(xt.grad)), i


# -- colour and evaluation protocol ------------------------------------------------------------
def test_ycbcr_examples():
    px = np.array([[1.0, 0.0, 0.5], [1.0, 0.0, 0.5], [1.0, 0.0, 0.5]])[:, :, None]
    out = rgb_to_ycbcr(px)
    np.testing.assert_allclose(out[:, 0, 0], [1.0, 0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(out[:, 1, 0], [0.0, 0.5, 0.5], atol=1e-12)
    np.testing.assert_array_equal(out[0, 2, 0], 0.5)
    red = rgb_to_ycbcr(np.array([1.0, 0.0, 0.0])[:, None, None])[:, 0, 0]
    np.testing.assert_allclose(red, [0.299, 0.5 - 0.168736, 1.0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(0, 1)))
def test_gray_luma_is_exact(plane):
    rgb = np.stack([plane] * 3)
    np.testing.assert_array_equal(rgb_to_ycbcr(rgb)[0], plane)


def test_evaluate_pair(rng):
    gt = rng.random((3, 16, 16))
    assert evaluate_pair(gt, gt) == (120.0, 1.0)
    p1, s1 = evaluate_pair(gt + 2.0, gt)
    p2, s2 = evaluate_pair(np.ones_like(gt), gt)
    assert (p1, s1) == (p2, s2)
    gray = np.stack([rng.random((16, 16))] * 3)
    noisy = np.stack([gray[0] + 0.05] * 3)
    assert evaluate_pair(noisy, gray, Protocol.YLUMA)[0] == pytest.approx(evaluate_pair(noisy, gray)[0])
