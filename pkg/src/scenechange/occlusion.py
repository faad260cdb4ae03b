"""Occlusion detection by reprojected-depth consistency.

A source pixel is occluded in the other view when the depth of its
reprojected 3D point exceeds the depth the other view estimates at the
corresponding pixel by more than an adaptive threshold. The threshold
combines a fraction of the other view's median depth with a robust
statistic of the observed depth differences.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import CorrespondenceField

DEFAULT_ALPHA = 0.03
DEFAULT_KAPPA = 2.5


@dataclass
class OcclusionMask:
    """Binary occlusion mask plus the threshold that produced it."""

    mask: np.ndarray
    tau: float
    delta_stats: Tuple[float, float]  # (median, MAD) of depth differences


def _nearest_indices(coords: np.ndarray) -> np.ndarray:
    # round half away from zero; coordinates are non-negative here
    return np.floor(coords + 0.5).astype(np.intp)


def sample_depth(depth: np.ndarray, p) -> float:
    """Nearest-neighbor depth lookup at a continuous pixel coordinate."""
    u, v = float(p[0]), float(p[1])
    h, w = depth.shape
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        raise ValueError(f"pixel ({u}, {v}) outside [0, {w - 1}] x [0, {h - 1}]")
    col = int(np.floor(u + 0.5))
    row = int(np.floor(v + 0.5))
    return float(depth[row, col])


def mad(values: np.ndarray) -> float:
    """Median absolute deviation, med(|x - med(x)|)."""
    values = np.asarray(values, dtype=np.float64)
    return float(np.median(np.abs(values - np.median(values))))


def adaptive_tau(depth_other: np.ndarray, delta, alpha: float = DEFAULT_ALPHA,
                 kappa: float = DEFAULT_KAPPA) -> float:
    """Depth-consistency threshold.

    max(alpha * med(depth of the other view), med(delta) + kappa * MAD(delta)).
    The first term keeps the threshold scale-aware when the differences
    are degenerate (constant delta has MAD 0).
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.size == 0:
        raise ValueError("no overlap; occlusion undefined")
    if alpha <= 0 or kappa <= 0:
        raise ValueError("alpha and kappa must be positive")
    geometric = alpha * float(np.median(np.asarray(depth_other, dtype=np.float64)))
    statistical = float(np.median(delta)) + kappa * mad(delta)
    return max(geometric, statistical)


def occlusion_mask(field: CorrespondenceField, depth_other: np.ndarray,
                   alpha: float = DEFAULT_ALPHA,
                   kappa: float = DEFAULT_KAPPA) -> OcclusionMask:
    """Flag source pixels hidden behind nearer geometry in the other view.

    Only pixels inside the visual overlap can be flagged; pixels without a
    valid correspondence are not occluded by definition.
    """
    if field.shape != depth_other.shape:
        raise ValueError("correspondence field and depth map shapes differ")
    valid = field.valid
    if not valid.any():
        raise ValueError("no overlap; occlusion undefined")
    targets = field.target[valid].astype(np.float64)
    cols = _nearest_indices(targets[:, 0])
    rows = _nearest_indices(targets[:, 1])
    delta = field.depth_in_target[valid].astype(np.float64) - \
        depth_other.astype(np.float64)[rows, cols]
    tau = adaptive_tau(depth_other, delta, alpha=alpha, kappa=kappa)
    mask = np.zeros(field.shape, dtype=bool)
    mask[valid] = delta > tau
    stats = (float(np.median(delta)), mad(delta))
    return OcclusionMask(mask=mask, tau=float(tau), delta_stats=stats)
