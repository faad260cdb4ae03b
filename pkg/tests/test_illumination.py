import numpy as np
import pytest
from scipy.ndimage import gaussian_filter
from scipy.special import ndtr

from scenechange import (color_transfer, illumination_gap, preprocess_pair,
                         retinex)
from scenechange.illumination import (THETA_GRAY, THETA_HIST, lab_statistics,
                                      retinex_reflectance)


def _smooth_texture(rng, shape=(64, 64), lo=40, hi=120, even=False):
    """Saturation-free random texture; `even` quantizes to even levels so
    that 0.5x and 2x gains stay exact in uint8."""
    field = gaussian_filter(rng.normal(size=shape), sigma=3.0)
    field = (field - field.min()) / (field.max() - field.min())
    vals = lo + field * (hi - lo)
    if even:
        vals = 2.0 * np.round(vals / 2.0)
    img = np.stack([vals, np.roll(vals, 7, axis=0), np.roll(vals, 13, axis=1)], axis=-1)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# gap measurement


def test_gap_identity(rng):
    img = _smooth_texture(rng)
    report = illumination_gap(img, img)
    assert report.gray_gap == 0.0
    assert report.hist_gap == 0.0
    assert not report.triggered


def test_gap_brightness_shift(rng):
    img = _smooth_texture(rng, lo=40, hi=160)
    shifted = (img.astype(np.int64) + 80).astype(np.uint8)  # no saturation
    report = illumination_gap(img, shifted)
    assert report.gray_gap == pytest.approx(80 / 255, abs=1e-12)
    assert report.gray_gap > THETA_GRAY
    assert report.triggered


def test_gap_channel_permutation_two_color_image():
    # 70% pixels (180, 90, 40), 30% pixels (140, 90, 70); permuting R<->B
    # barely moves luminance but shifts the per-channel distributions
    h, w = 40, 50
    img1 = np.zeros((h, w, 3), dtype=np.uint8)
    img1[..., :] = (180, 90, 40)
    img1[:12, :, :] = (140, 90, 70)  # 12/40 = 30% of rows
    img2 = img1[..., ::-1].copy()

    y = lambda c: 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
    expected_gray = abs(0.7 * (y((180, 90, 40)) - y((40, 90, 180)))
                        + 0.3 * (y((140, 90, 70)) - y((70, 90, 140)))) / 255
    # R channel CDF gap: 0.7 over [40,70), 1.0 over [70,140), 0.7 over [140,180)
    expected_emd = (30 * 0.7 + 70 * 1.0 + 40 * 0.7) / 256
    report = illumination_gap(img1, img2)
    assert report.gray_gap == pytest.approx(expected_gray, abs=1e-12)
    assert report.hist_gap == pytest.approx(2 * expected_emd / 3, abs=1e-12)
    assert report.gray_gap < THETA_GRAY
    assert report.hist_gap > THETA_HIST
    assert report.triggered


def test_gap_dimension_mismatch():
    with pytest.raises(ValueError, match="dimensions"):
        illumination_gap(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5, 3), np.uint8))


# ---------------------------------------------------------------------------
# retinex


def test_retinex_constant_image_maps_to_midgray():
    img = np.full((32, 32, 3), 77, dtype=np.uint8)
    out = retinex(img)
    assert (out == 128).all()


@pytest.mark.parametrize("gain", [0.5, 2.0])
def test_retinex_gain_invariance(rng, gain):
    img = _smooth_texture(rng, shape=(64, 64), lo=40, hi=120, even=True)
    scaled = np.rint(img.astype(np.float64) * gain).astype(np.uint8)
    base = retinex(img).astype(np.int64)
    out = retinex(scaled).astype(np.int64)
    assert np.abs(out - base).max() <= 2


def test_retinex_step_edge_matches_analytic_blur():
    # 1-D step replicated down the rows; the blurred illumination estimate
    # follows the Gaussian CDF, so the reflectance is predictable pointwise
    h, w = 32, 256
    a, b, x0 = 60.0, 180.0, 128
    img = np.full((h, w, 3), a, dtype=np.uint8)
    img[:, x0:, :] = int(b)
    sigma = 0.1 * h
    refl = retinex_reflectance(img, sigma_frac=0.1)

    x = np.arange(w, dtype=np.float64)
    step = np.where(x >= x0, b, a) / 255.0
    blur = (a + (b - a) * ndtr((x - (x0 - 0.5)) / sigma)) / 255.0
    expected = np.log(step + 1e-3) - np.log(blur + 1e-3)
    interior = slice(20, w - 20)
    assert np.abs(refl[h // 2, interior, 0] - expected[interior]).max() < 2e-3
    # flat regions equalize, the edge keeps its log contrast
    assert abs(refl[h // 2, 30, 0]) < 0.02
    assert abs(refl[h // 2, w - 30, 0]) < 0.02
    edge_jump = refl[h // 2, x0 + 1, 0] - refl[h // 2, x0 - 2, 0]
    assert edge_jump > 0.5 * (np.log(b / 255 + 1e-3) - np.log(a / 255 + 1e-3))


def test_retinex_sigma_frac_validation():
    with pytest.raises(ValueError, match="sigma_frac"):
        retinex(np.zeros((8, 8, 3), np.uint8), sigma_frac=1.5)


# ---------------------------------------------------------------------------
# color transfer


def test_color_transfer_identity(rng):
    img = _smooth_texture(rng, lo=30, hi=210)
    out = color_transfer(img, img)
    assert np.abs(out.astype(np.int64) - img.astype(np.int64)).max() <= 1


def test_color_transfer_degenerate_source():
    src = np.full((16, 16, 3), 128, dtype=np.uint8)
    ref = np.zeros((16, 16, 3), dtype=np.uint8)
    ref[..., 2] = 200  # constant blue
    out = color_transfer(src, ref)
    assert (out == out[0, 0]).all()
    assert np.abs(out[0, 0].astype(np.int64) - ref[0, 0].astype(np.int64)).max() <= 1


def test_color_transfer_matches_reference_statistics(rng):
    src = _smooth_texture(rng, lo=60, hi=190)
    ref = _smooth_texture(np.random.default_rng(99), lo=40, hi=150)
    ref[..., 0] = np.clip(ref[..., 0].astype(np.int64) + 30, 0, 255).astype(np.uint8)
    out = color_transfer(src, ref)
    mu_out, sd_out = lab_statistics(out)
    mu_ref, sd_ref = lab_statistics(ref)
    span_mu = np.abs(mu_ref) + 1e-9
    assert (np.abs(mu_out - mu_ref) / span_mu).max() < 0.01
    assert (np.abs(sd_out - sd_ref) / sd_ref).max() < 0.01


# ---------------------------------------------------------------------------
# pair preprocessing


def test_preprocess_none_is_identity(rng):
    img1 = _smooth_texture(rng)
    img2 = (img1.astype(np.int64) + 90).astype(np.uint8)
    out1, out2, report = preprocess_pair(img1, img2, method="none")
    assert out1 is img1 and out2 is img2
    assert report.method == "none"


def test_preprocess_auto_untriggered_passes_through(rng):
    img1 = _smooth_texture(rng)
    img2 = (img1.astype(np.int64) + 4).astype(np.uint8)
    out1, out2, report = preprocess_pair(img1, img2, method="auto")
    assert not report.triggered
    assert out1 is img1 and out2 is img2


def test_preprocess_auto_triggered_applies_retinex(rng):
    img1 = _smooth_texture(rng, lo=30, hi=120)
    img2 = (img1.astype(np.int64) + 100).astype(np.uint8)
    out1, out2, report = preprocess_pair(img1, img2, method="auto")
    assert report.triggered
    assert report.method == "retinex"
    np.testing.assert_array_equal(out1, retinex(img1))
    np.testing.assert_array_equal(out2, retinex(img2))


def test_preprocess_color_transfer_leaves_first_image(rng):
    img1 = _smooth_texture(rng, lo=50, hi=180)
    img2 = _smooth_texture(np.random.default_rng(5), lo=70, hi=210)
    out1, out2, report = preprocess_pair(img1, img2, method="color_transfer")
    assert out1 is img1
    assert report.method == "color_transfer"
    mu_out, sd_out = lab_statistics(out2)
    mu_ref, sd_ref = lab_statistics(img1)
    assert (np.abs(sd_out - sd_ref) / sd_ref).max() < 0.01


def test_preprocess_unknown_method():
    img = np.zeros((8, 8, 3), np.uint8)
    with pytest.raises(ValueError, match="unknown method"):
        preprocess_pair(img, img, method="equalize")
