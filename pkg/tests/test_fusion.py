import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter

from edof.defocus_sim import FocalStackSpec, generate_stack
from edof.fusion import (
    FusedResult,
    FusionConfig,
    fuse_highpass,
    fuse_lowpass,
    fuse_stack,
    render_depth_coded,
)
from edof.image_core import ShapeMismatchError
from edof.wavelet import WAVELETS, dwt2

CONFIGS = [FusionConfig(w, lv) for w in sorted(WAVELETS) for lv in (1, 2, 3, 4)]


def test_lowpass_two_bands_is_half_sum():
    np.testing.assert_array_equal(fuse_lowpass([np.array([2.0]), np.array([4.0])]), [3.0])


def test_lowpass_single_and_three():
    np.testing.assert_array_equal(fuse_lowpass([np.array([7.0])]), [7.0])
    # 1/n mean, not a fixed factor of one half.
    np.testing.assert_array_equal(fuse_lowpass([np.array([0.0]), np.array([3.0]), np.array([6.0])]), [3.0])


@pytest.mark.parametrize(
    "bands,coef,idx",
    [([[-5.0], [3.0]], -5.0, 0), ([[2.0], [2.0]], 2.0, 0), ([[-1.0]], -1.0, 0), ([[1.0], [-4.0], [4.0]], -4.0, 1)],
)
def test_highpass_examples(bands, coef, idx):
    fused, index = fuse_highpass([np.array(b) for b in bands])
    assert fused[0] == coef and index[0] == idx


def test_band_errors():
    with pytest.raises(ValueError):
        fuse_lowpass([])
    with pytest.raises(ShapeMismatchError):
        fuse_highpass([np.zeros(2), np.zeros(3)])
    with pytest.raises(ValueError):
        fuse_highpass([np.zeros(2)], tie_break="random")


def test_stack_errors():
    with pytest.raises(ValueError):
        fuse_stack([])
    with pytest.raises(ShapeMismatchError):
        fuse_stack([np.zeros((8, 8)), np.zeros((8, 9))])
    with pytest.raises(ValueError):
        FusionConfig(levels=0)
    with pytest.raises(ValueError):
        FusionConfig(wavelet="coif1")


def test_config_clamped_to_image():
    assert FusionConfig("haar", 6).clamped((20, 40)).levels == 4


@settings(max_examples=30, deadline=None)
@given(
    cfg=st.sampled_from(CONFIGS),
    shape=st.tuples(st.integers(16, 33), st.integers(16, 33)),
    copies=st.integers(1, 3),
    seed=st.integers(0, 2**16),
)
def test_identical_copies_fuse_to_themselves(cfg, shape, copies, seed):
    x = np.random.default_rng(seed).random(shape)
    res = fuse_stack([x] * copies, cfg)
    assert np.max(np.abs(res.image - x)) < 1e-9
    assert not res.source_map.any()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 4), size=st.integers(1, 30), seed=st.integers(0, 2**16))
def test_rules_are_exact(n, size, seed):
    bands = list(np.random.default_rng(seed).normal(size=(n, size)))
    low = fuse_lowpass(bands)
    np.testing.assert_array_equal(low, np.mean(np.stack(bands), axis=0))
    high, index = fuse_highpass(bands)
    np.testing.assert_array_equal(np.abs(high), np.max(np.abs(np.stack(bands)), axis=0))
    np.testing.assert_array_equal(high, np.stack(bands)[index, np.arange(size)])


@settings(max_examples=15, deadline=None)
@given(cfg=st.sampled_from(CONFIGS), seed=st.integers(0, 2**16))
def test_fused_pyramid_obeys_rules(cfg, seed):
    # Every level even-sized, so the transform is square and re-analysis is exact.
    rng = np.random.default_rng(seed)
    images = [rng.random((32, 48)) for _ in range(3)]
    fused = fuse_stack(images, cfg).image
    pf = dwt2(fused, cfg.wavelet, cfg.levels)
    ps = [dwt2(im, cfg.wavelet, cfg.levels) for im in images]
    np.testing.assert_allclose(pf.approx, np.mean([p.approx for p in ps], axis=0), atol=1e-9)
    for lvl in range(cfg.levels):
        for k in range(3):
            mags = np.max([np.abs(p.details[lvl][k]) for p in ps], axis=0)
            np.testing.assert_allclose(np.abs(pf.details[lvl][k]), mags, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(cfg=st.sampled_from(CONFIGS), seed=st.integers(0, 2**16), perm=st.permutations([0, 1, 2]))
def test_permutation_equivariance(cfg, seed, perm):
    rng = np.random.default_rng(seed)
    images = [rng.random((20, 28)) for _ in range(3)]
    a = fuse_stack(images, cfg)
    b = fuse_stack([images[i] for i in perm], cfg)
    np.testing.assert_allclose(a.image, b.image, atol=1e-12)
    np.testing.assert_array_equal(np.asarray(perm)[b.source_map], a.source_map)


def haar_fuse_direct(x, y):
    def fwd(im):
        a, b = im[0::2, 0::2], im[0::2, 1::2]
        c, d = im[1::2, 0::2], im[1::2, 1::2]
        return [(a + b + c + d) / 2, (a + b - c - d) / 2, (a - b + c - d) / 2, (a - b - c + d) / 2]

    fx, fy = fwd(x), fwd(y)
    ll = (fx[0] + fy[0]) / 2
    det = [np.where(np.abs(u) >= np.abs(v), u, v) for u, v in zip(fx[1:], fy[1:])]
    lh, hl, hh = det
    out = np.empty_like(x)
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[0::2, 1::2] = (ll + lh - hl - hh) / 2
    out[1::2, 0::2] = (ll - lh + hl - hh) / 2
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_haar_one_level_matches_block_oracle(h, w, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random((2 * h, 2 * w)), rng.random((2 * h, 2 * w))
    got = fuse_stack([x, y], FusionConfig("haar", 1)).image
    np.testing.assert_allclose(got, haar_fuse_direct(x, y), atol=1e-12)


@pytest.mark.parametrize("cfg", [FusionConfig("haar", 3), FusionConfig("db2", 3), FusionConfig()])
def test_sharp_plus_blurred_is_closer_to_sharp(cfg):
    rng = np.random.default_rng(3)
    sharp = gaussian_filter(rng.random((64, 64)), 0.8)
    blurred = gaussian_filter(sharp, 2.0, mode="reflect")
    fused = fuse_stack([sharp, blurred], cfg).image
    assert np.linalg.norm(fused - sharp) < np.linalg.norm(blurred - sharp)


def test_thread_cap_does_not_change_result(monkeypatch):
    rng = np.random.default_rng(5)
    images = [rng.random((32, 32)) for _ in range(4)]
    monkeypatch.setenv("EDOF_THREADS", "1")
    serial = fuse_stack(images).image
    monkeypatch.setenv("EDOF_THREADS", "0")
    parallel = fuse_stack(images).image
    np.testing.assert_array_equal(serial, parallel)


RED, BLUE = (255, 0, 0), (0, 0, 255)


def test_render_single_index_is_red():
    img = np.linspace(0.1, 1.0, 12).reshape(3, 4)
    res = FusedResult(img, np.zeros((3, 4), dtype=int), 2)
    rgb = render_depth_coded(res, [RED, BLUE])
    assert rgb.shape == (3, 4, 3)
    assert not rgb[..., 1:].any()
    np.testing.assert_allclose(rgb[..., 0], img / img.max())


def test_render_zero_amplitude_is_black():
    img = np.array([[0.0, 1.0], [-0.2, 0.5]])
    res = FusedResult(img, np.array([[1, 0], [1, 1]]), 2)
    rgb = render_depth_coded(res, [RED, BLUE])
    assert not rgb[0, 0].any() and not rgb[1, 0].any()
    np.testing.assert_allclose(rgb[1, 1], [0, 0, 0.5])


def test_render_palette_errors():
    res = FusedResult(np.ones((2, 2)), np.zeros((2, 2), dtype=int), 2)
    with pytest.raises(ValueError):
        render_depth_coded(res, [RED])
    with pytest.raises(ValueError):
        render_depth_coded(FusedResult(np.ones((2, 2)), np.zeros((2, 2), dtype=int), 7))


def test_near_and_far_halves_take_their_own_hue():
    rng = np.random.default_rng(0)
    gt = gaussian_filter(rng.random((64, 96)), 1.0)
    gt = (gt - gt.min()) / (gt.max() - gt.min())
    depth = np.zeros_like(gt)
    depth[:, 48:] = 120.0
    spec = FocalStackSpec(gt, depth, (0.0, 120.0))
    res = fuse_stack(generate_stack(spec), FusionConfig())
    rgb = render_depth_coded(res, [RED, BLUE])
    near, far = rgb[8:-8, 8:36], rgb[8:-8, 60:-8]
    assert np.mean(res.source_map[8:-8, 8:36] == 0) > 0.9
    assert np.mean(res.source_map[8:-8, 60:-8] == 1) > 0.9
    assert near[..., 0].sum() > 10 * near[..., 2].sum()
    assert far[..., 2].sum() > 10 * far[..., 0].sum()
