import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from cmfnet.data import (BlurParams, HazeParams, ImagePair, PairSource, augment, dihedral, invert_haze,
                         load_image, load_pair_dir, motion_kernel, random_blur_params, random_haze_params,
                         sample_patch, save_image, synth_blur, synth_haze, synthetic_clean_image,
                         synthetic_pairs, to_uint8, to_unit)


def _img(rng, h=8, w=8):
    return rng.random((3, h, w)).astype(np.float32)


# -- I/O ------------------------------------------------------------------------------
@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_save_load_round_trip(tmp_path, rng, suffix):
    x = to_unit(rng.integers(0, 256, (3, 7, 5), dtype=np.uint8))
    path = tmp_path / f"img{suffix}"
    save_image(x, path)
    np.testing.assert_array_equal(load_image(path), x)


def test_unit_scaling_ends():
    assert to_unit(np.array([255], np.uint8))[0] == 1.0
    assert to_unit(np.array([0], np.uint8))[0] == 0.0
    np.testing.assert_array_equal(to_uint8(np.array([-0.5, 0.5 / 255, 2.0])), [0, 1, 255])
    codes = np.arange(256, dtype=np.uint8)
    np.testing.assert_array_equal(to_uint8(to_unit(codes)), codes)


def test_grayscale_policy(tmp_path):
    path = tmp_path / "g.png"
    Image.fromarray(np.full((4, 6), 128, np.uint8), mode="L").save(path)
    img = load_image(path)
    assert img.shape == (3, 4, 6)
    np.testing.assert_array_equal(img[0], img[2])
    with pytest.raises(ValueError):
        load_image(path, gray="reject")


def test_unreadable_image(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(OSError):
        load_image(bad)


def test_load_pair_dir(tmp_path, rng):
    for sub in ("degraded", "clean"):
        (tmp_path / sub).mkdir()
    for name in ("b", "a"):
        save_image(_img(rng), tmp_path / "degraded" / f"{name}.png")
        save_image(_img(rng), tmp_path / "clean" / f"{name}.png")
    pairs = load_pair_dir(tmp_path)
    assert [p.id for p in pairs] == ["a", "b"]
    (tmp_path / "degraded" / "c.png").write_bytes((tmp_path / "degraded" / "a.png").read_bytes())
    with pytest.raises(FileNotFoundError, match="c.png"):
        load_pair_dir(tmp_path)


def test_pair_shape_mismatch():
    with pytest.raises(ValueError):
        ImagePair(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


# -- haze -------------------------------------------------------------------------------
def test_haze_example():
    out = synth_haze(np.ones((3, 2, 2)), HazeParams(np.full((1, 2, 2), 0.5), np.full(3, 0.8)))
    np.testing.assert_allclose(out, 0.9, rtol=1e-7)


def test_haze_limits(rng):
    x = _img(rng)
    a = rng.uniform(0.6, 1, 3).astype(np.float32)
    np.testing.assert_array_equal(synth_haze(x, HazeParams(np.ones((1, 8, 8)), a)), x)
    np.testing.assert_array_equal(synth_haze(x, HazeParams(np.zeros((1, 8, 8)), a)),
                                  np.broadcast_to(a[:, None, None], x.shape))


def test_haze_inversion(rng):
    for _ in range(20):
        x = _img(rng, 16, 16)
        params = random_haze_params(rng, 16, 16)
        np.testing.assert_allclose(invert_haze(synth_haze(x, params), params), x, atol=1e-6)


def test_haze_rejects_bad_transmission():
    with pytest.raises(ValueError):
        synth_haze(np.zeros((3, 2, 2)), HazeParams(np.full((1, 2, 2), 1.5), np.ones(3)))


def test_haze_params_ranges_and_determinism():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = random_haze_params(rng, 8, 8)
        assert 0.2 <= p.transmission.min() and p.transmission.max() <= 0.9
        assert 0.6 <= p.atmosphere.min() and p.atmosphere.max() <= 1.0
    a = random_haze_params(np.random.default_rng(3), 16, 16)
    b = random_haze_params(np.random.default_rng(3), 16, 16)
    np.testing.assert_array_equal(a.transmission, b.transmission)
    np.testing.assert_array_equal(a.atmosphere, b.atmosphere)


# -- blur -------------------------------------------------------------------------------
def test_identity_kernel_is_exact(rng):
    x = to_unit(rng.integers(0, 256, (3, 9, 9), dtype=np.uint8))
    k = np.zeros((3, 3))
    k[1, 1] = 1
    np.testing.assert_array_equal(synth_blur(x, BlurParams(k)), x)


def test_box_blur_on_ramp():
    ramp = np.arange(5.0) / 4
    x = np.broadcast_to(ramp, (3, 1, 5)).copy()
    out = synth_blur(x, BlurParams(np.full((1, 3), 1 / 3)))
    # mirrored borders: x[-1] == x[1], x[5] == x[3]
    oracle = [(ramp[1] + ramp[0] + ramp[1]) / 3, 0.25, 0.5, 0.75, (ramp[3] + ramp[4] + ramp[3]) / 3]
    np.testing.assert_allclose(out[0, 0], oracle, rtol=1e-6)


def test_blur_preserves_constants(rng):
    params = random_blur_params(rng)
    out = synth_blur(np.full((3, 12, 12), 0.4), BlurParams(params.kernel))
    np.testing.assert_allclose(out, 0.4, rtol=1e-6)


def test_blur_rejects_bad_kernels():
    with pytest.raises(ValueError):
        synth_blur(np.zeros((3, 4, 4)), BlurParams(np.full((3, 3), 0.2)))
    with pytest.raises(ValueError):
        synth_blur(np.zeros((3, 4, 4)), BlurParams(np.full((2, 2), 0.25)))


def test_blur_noise_is_seeded_and_clamped(rng):
    x = _img(rng)
    k = np.ones((1, 1))
    a = synth_blur(x, BlurParams(k, 0.5), np.random.default_rng(1))
    b = synth_blur(x, BlurParams(k, 0.5), np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1


def test_blur_params_ranges():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = random_blur_params(rng)
        k = p.kernel
        assert k.shape[0] == k.shape[1] and k.shape[0] % 2 == 1 and 3 <= k.shape[0] <= 9
        assert k.min() >= 0 and abs(k.sum() - 1) < 1e-12
        assert 0 <= p.noise_sigma <= 0.01


def test_motion_kernel_horizontal():
    k = motion_kernel(5, 0.0)
    assert k[2].sum() == pytest.approx(1.0) and np.all(k[2] > 0)
    np.testing.assert_allclose(k[2], k[2, ::-1], atol=1e-12)
    assert k.sum() == pytest.approx(1.0)


# -- synthetic set, sampling, augmentation ---------------------------------------------------
def test_synthetic_pairs_deterministic():
    a = synthetic_pairs("haze", 3, 32, seed=5)
    b = synthetic_pairs("haze", 3, 32, seed=5)
    c = synthetic_pairs("haze", 3, 32, seed=6)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.degraded, pb.degraded)
    assert not np.array_equal(a[0].clean, c[0].clean)
    assert a[0].clean.dtype == np.float32 and a[0].clean.shape == (3, 32, 32)
    assert 0 <= a[0].degraded.min() and a[0].degraded.max() <= 1
    with pytest.raises(ValueError):
        synthetic_pairs("rain", 1, 16, 0)


def test_synthetic_clean_has_texture(rng):
    img = synthetic_clean_image(rng, 64)
    assert img.std() > 0.05


@settings(max_examples=30, deadline=None)
@given(h=st.integers(8, 20), w=st.integers(8, 20), seed=st.integers(0, 1000))
def test_patch_is_aligned_crop(h, w, seed):
    rng = np.random.default_rng(seed)
    clean = rng.random((3, h, w)).astype(np.float32)
    pair = ImagePair(clean + 1, clean)
    patch = sample_patch(pair, 8, rng)
    assert patch.clean.shape == (3, 8, 8)
    np.testing.assert_array_equal(patch.degraded, patch.clean + 1)


def test_patch_validation(rng):
    pair = ImagePair(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))
    with pytest.raises(ValueError):
        sample_patch(pair, 12, rng)
    with pytest.raises(ValueError):
        sample_patch(pair, 6, rng)


def test_dihedral_group(rng):
    x = rng.random((3, 4, 4))
    images = [dihedral(x, i) for i in range(8)]
    assert len({im.tobytes() for im in images}) == 8
    np.testing.assert_array_equal(dihedral(x, 0), x)
    np.testing.assert_array_equal(dihedral(dihedral(x, 1), 3), x)
    for i in range(4, 8):
        np.testing.assert_array_equal(dihedral(dihedral(x, i), i), x)
    with pytest.raises(ValueError):
        dihedral(rng.random((3, 4, 6)), 1)
    with pytest.raises(ValueError):
        dihedral(x, 8)


def test_augment_applies_same_transform(rng):
    clean = rng.random((3, 6, 6))
    pair = ImagePair(clean * 2, clean)
    for _ in range(16):
        out = augment(pair, rng)
        np.testing.assert_array_equal(out.degraded, out.clean * 2)


def test_pair_source_batches():
    src = PairSource(synthetic_pairs("blur", 4, 24, seed=0), patch=16)
    a = src.sample_batch(np.random.default_rng(9), 3)
    b = src.sample_batch(np.random.default_rng(9), 3)
    assert a[0].shape == a[1].shape == (3, 3, 16, 16)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    with pytest.raises(ValueError):
        PairSource([])
