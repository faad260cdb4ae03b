"""Illumination-gap detection and image preprocessing.

Large brightness or color-distribution gaps between the two views are
detected from luminance means and per-channel histogram distances. When
triggered, images can be normalized before geometric reconstruction with
single-scale Retinex reflectance extraction, or with Reinhard statistics
transfer in decorrelated l-alpha-beta color space. Preprocessed images feed
only the reconstruction stage; feature extraction always sees originals.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

THETA_GRAY = 0.12
THETA_HIST = 0.08
DEFAULT_SIGMA_FRAC = 0.1
_LOG_EPS = 1e-3

METHODS = ("auto", "none", "retinex", "color_transfer")

# Ruderman RGB->LMS cone response, then the orthogonal LMS->l-alpha-beta basis
_RGB_TO_LMS = np.array([
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
])
_r3, _r6, _r2 = np.sqrt(3.0), np.sqrt(6.0), np.sqrt(2.0)
_LMS_TO_LAB = np.array([
    [1 / _r3, 1 / _r3, 1 / _r3],
    [1 / _r6, 1 / _r6, -2 / _r6],
    [1 / _r2, -1 / _r2, 0.0],
])
_LMS_TO_RGB = np.linalg.inv(_RGB_TO_LMS)
_LAB_TO_LMS = np.linalg.inv(_LMS_TO_LAB)
_LAB_EPS = 1e-4


@dataclass
class IlluminationReport:
    """Measured brightness/color gap and the preprocessing decision."""

    gray_gap: float
    hist_gap: float
    triggered: bool
    method: str


def _require_rgb(img: np.ndarray, name: str) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must be HxWx3")
    return img


def illumination_gap(img1: np.ndarray, img2: np.ndarray) -> IlluminationReport:
    """Measure luminance and histogram gaps between an image pair.

    gray_gap is the absolute difference of mean luminance (BT.601 weights)
    normalized to [0, 1]; hist_gap is the per-channel earth-mover distance
    between 256-bin histograms, averaged over channels.
    """
    img1 = _require_rgb(img1, "img1")
    img2 = _require_rgb(img2, "img2")
    if img1.shape != img2.shape:
        raise ValueError("images must share dimensions")
    weights = np.array([0.299, 0.587, 0.114])
    y1 = img1.astype(np.float64) @ weights / 255.0
    y2 = img2.astype(np.float64) @ weights / 255.0
    gray_gap = float(abs(y1.mean() - y2.mean()))

    emd = 0.0
    n = img1.shape[0] * img1.shape[1]
    for c in range(3):
        h1 = np.bincount(img1[..., c].reshape(-1), minlength=256) / n
        h2 = np.bincount(img2[..., c].reshape(-1), minlength=256) / n
        emd += float(np.mean(np.abs(np.cumsum(h1) - np.cumsum(h2))))
    hist_gap = emd / 3.0

    triggered = gray_gap > THETA_GRAY or hist_gap > THETA_HIST
    return IlluminationReport(gray_gap=gray_gap, hist_gap=hist_gap,
                              triggered=triggered, method="none")


def retinex_reflectance(img: np.ndarray, sigma_frac: float = DEFAULT_SIGMA_FRAC) -> np.ndarray:
    """Single-scale log reflectance, per channel, before any stretching."""
    img = _require_rgb(img, "img")
    if not 0 < sigma_frac < 1:
        raise ValueError("sigma_frac must lie in (0, 1)")
    sigma = sigma_frac * min(img.shape[0], img.shape[1])
    scaled = img.astype(np.float64) / 255.0
    out = np.empty_like(scaled)
    for c in range(3):
        blur = gaussian_filter(scaled[..., c], sigma=sigma)
        out[..., c] = np.log(scaled[..., c] + _LOG_EPS) - np.log(blur + _LOG_EPS)
    return out


def _stretch_to_u8(channel: np.ndarray) -> np.ndarray:
    lo, hi = np.percentile(channel, [1.0, 99.0])
    if hi - lo < 1e-12:
        return np.full(channel.shape, 128, dtype=np.uint8)
    scaled = (channel - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def retinex(img: np.ndarray, sigma_frac: float = DEFAULT_SIGMA_FRAC) -> np.ndarray:
    """Illumination-invariant reflectance image.

    The log reflectance of each channel is linearly stretched to [0, 255]
    between its 1st and 99th percentiles; a constant channel maps to
    mid-gray.
    """
    r = retinex_reflectance(img, sigma_frac)
    out = np.empty(img.shape, dtype=np.uint8)
    for c in range(3):
        out[..., c] = _stretch_to_u8(r[..., c])
    return out


def _rgb_to_lab(img: np.ndarray) -> np.ndarray:
    flat = img.reshape(-1, 3).astype(np.float64) / 255.0
    lms = flat @ _RGB_TO_LMS.T
    lab = np.log10(lms + _LAB_EPS) @ _LMS_TO_LAB.T
    return lab.reshape(img.shape)


def _lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    flat = lab.reshape(-1, 3)
    lms = np.power(10.0, flat @ _LAB_TO_LMS.T) - _LAB_EPS
    rgb = (lms @ _LMS_TO_RGB.T) * 255.0
    return np.clip(np.rint(rgb.reshape(lab.shape)), 0, 255).astype(np.uint8)


def lab_statistics(img: np.ndarray):
    """Per-channel mean and standard deviation in l-alpha-beta space."""
    lab = _rgb_to_lab(_require_rgb(img, "img")).reshape(-1, 3)
    return lab.mean(axis=0), lab.std(axis=0)


def color_transfer(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Map `src` toward the color statistics of `ref` (Reinhard transfer).

    Each l-alpha-beta channel of `src` is shifted and rescaled to match the
    reference mean and standard deviation. A zero-variance source channel
    copies the reference mean outright.
    """
    src = _require_rgb(src, "src")
    ref = _require_rgb(ref, "ref")
    src_lab = _rgb_to_lab(src)
    ref_lab = _rgb_to_lab(ref)
    mu_s = src_lab.reshape(-1, 3).mean(axis=0)
    sd_s = src_lab.reshape(-1, 3).std(axis=0)
    mu_r = ref_lab.reshape(-1, 3).mean(axis=0)
    sd_r = ref_lab.reshape(-1, 3).std(axis=0)
    out = np.empty_like(src_lab)
    for c in range(3):
        if sd_s[c] == 0:
            out[..., c] = mu_r[c]
        else:
            out[..., c] = (src_lab[..., c] - mu_s[c]) * (sd_r[c] / sd_s[c]) + mu_r[c]
    return _lab_to_rgb(out)


def preprocess_pair(img1: np.ndarray, img2: np.ndarray, method: str = "auto",
                    sigma_frac: float = DEFAULT_SIGMA_FRAC):
    """Normalize an image pair ahead of geometric reconstruction.

    `auto` applies Retinex to both images only when the measured gap
    triggers; explicit methods force the behavior. Returns the (possibly
    transformed) pair and the gap report.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    report = illumination_gap(img1, img2)
    if method == "none" or (method == "auto" and not report.triggered):
        report.method = "none"
        return img1, img2, report
    if method == "color_transfer":
        report.method = "color_transfer"
        return img1, color_transfer(img2, img1), report
    # retinex, or a triggered auto pair
    report.method = "retinex"
    return retinex(img1, sigma_frac), retinex(img2, sigma_frac), report
