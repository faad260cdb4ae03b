"""Feature correlation across corresponding pixels and change proposals.

Dense encoder features of the two views are compared with cosine
similarity along the geometric correspondence; an adaptive threshold on
the similarity distribution yields the initial change proposal, which is
then cleaned of occluded pixels.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CorrespondenceField
from .occlusion import OcclusionMask, _nearest_indices

DEFAULT_LAYER = 17
MIN_DEFINED_PIXELS = 64


@dataclass
class FeatureMapSet:
    """Multi-head key features and the final encoder embedding of one view."""

    keys: np.ndarray          # heads x H x W x d
    embed: Optional[np.ndarray] = None  # H x W x d_e
    layer: int = DEFAULT_LAYER


@dataclass
class SimilarityMap:
    """Cross-view cosine similarity, defined only inside the overlap."""

    values: np.ndarray  # H x W, NaN where undefined
    defined: np.ndarray  # H x W bool


@dataclass
class ChangeProposal:
    mask: np.ndarray
    threshold_used: float
    stage: str  # "initial" | "refined"


def resize_grid(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a (..., h, w, d) grid, align-corners convention.

    Source coordinate of output index i is i * (src - 1) / (dst - 1);
    an output axis of length 1 samples coordinate 0.
    """
    h, w = arr.shape[-3], arr.shape[-2]
    if h < 2 or w < 2:
        raise ValueError("source grid must be at least 2x2")
    if (h, w) == (height, width):
        return arr

    def axis_coords(src: int, dst: int) -> np.ndarray:
        if dst == 1:
            return np.zeros(1)
        return np.arange(dst, dtype=np.float64) * (src - 1) / (dst - 1)

    ys = axis_coords(h, height)
    xs = axis_coords(w, width)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).reshape(-1, 1, 1)
    fx = (xs - x0).reshape(1, -1, 1)

    a = arr[..., y0[:, None], x0[None, :], :]
    b = arr[..., y0[:, None], x1[None, :], :]
    c = arr[..., y1[:, None], x0[None, :], :]
    d = arr[..., y1[:, None], x1[None, :], :]
    top = a * (1 - fx) + b * fx
    bottom = c * (1 - fx) + d * fx
    out = top * (1 - fy) + bottom * fy
    return out.astype(arr.dtype, copy=False)


def resize_features(raw: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize heads x h x w x d key features to image resolution."""
    raw = np.asarray(raw)
    if raw.ndim != 4:
        raise ValueError("expected a heads x h x w x d feature tensor")
    return resize_grid(raw, height, width)


def _masked_cosine(vec_a: np.ndarray, vec_b: np.ndarray) -> np.ndarray:
    """Cosine along the last axis; zero-norm vectors contribute 0."""
    dot = np.sum(vec_a * vec_b, axis=-1)
    norm = np.linalg.norm(vec_a, axis=-1) * np.linalg.norm(vec_b, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norm > 0, dot / np.where(norm > 0, norm, 1.0), 0.0)
    return np.clip(cos, -1.0, 1.0)


def similarity_map(feats_src: FeatureMapSet, feats_dst: FeatureMapSet,
                   field: CorrespondenceField) -> SimilarityMap:
    """Head-averaged cosine similarity between matched key features.

    Destination features are sampled with nearest-neighbor lookup at each
    source pixel's correspondence target.
    """
    keys_src = feats_src.keys
    keys_dst = feats_dst.keys
    if keys_src.shape[0] != keys_dst.shape[0] or keys_src.shape[3] != keys_dst.shape[3]:
        raise ValueError("feature head/channel dimensions disagree")
    if keys_src.shape[1:3] != field.shape:
        raise ValueError("features must be at the correspondence resolution")
    valid = field.valid
    values = np.full(field.shape, np.nan, dtype=np.float64)
    if valid.any():
        targets = field.target[valid].astype(np.float64)
        cols = _nearest_indices(targets[:, 0])
        rows = _nearest_indices(targets[:, 1])
        src_vecs = keys_src[:, valid, :].astype(np.float64)      # heads x N x d
        dst_vecs = keys_dst[:, rows, cols, :].astype(np.float64)
        values[valid] = _masked_cosine(src_vecs, dst_vecs).mean(axis=0)
    return SimilarityMap(values=values.astype(np.float32), defined=valid.copy())


def adaptive_threshold(sim: SimilarityMap) -> float:
    """Similarity cutoff from the first three moments of the defined values.

    theta = mean - lambda * std with lambda 1.5 for left-skewed
    distributions (heavy dissimilar tail) and 1.0 otherwise, clamped to
    [-1, 1].
    """
    vals = sim.values[sim.defined].astype(np.float64)
    if vals.size < MIN_DEFINED_PIXELS:
        raise ValueError("overlap too small for thresholding")
    mu = float(vals.mean())
    m2 = float(np.mean((vals - mu) ** 2))
    sigma = np.sqrt(m2)
    if m2 > 0:
        skew = float(np.mean((vals - mu) ** 3)) / m2 ** 1.5
    else:
        skew = 0.0
    lam = 1.5 if skew < 0 else 1.0
    return float(np.clip(mu - lam * sigma, -1.0, 1.0))


def initial_proposal(sim: SimilarityMap) -> ChangeProposal:
    """Pixels strictly less similar than the adaptive threshold."""
    theta = adaptive_threshold(sim)
    with np.errstate(invalid="ignore"):
        mask = sim.defined & (sim.values < theta)
    return ChangeProposal(mask=mask, threshold_used=theta, stage="initial")


def refine_with_occlusion(proposal: ChangeProposal,
                          occ: OcclusionMask) -> ChangeProposal:
    """Drop occluded pixels from an initial proposal."""
    if proposal.stage != "initial":
        raise ValueError("refine_with_occlusion expects an initial proposal")
    if proposal.mask.shape != occ.mask.shape:
        raise ValueError("proposal and occlusion mask shapes differ")
    return ChangeProposal(mask=proposal.mask & ~occ.mask,
                          threshold_used=proposal.threshold_used,
                          stage="refined")
