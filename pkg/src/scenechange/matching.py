"""Object-level change masks from class-agnostic segmentation.

The coarse per-view proposal selects segmentation masks it substantially
covers, provided they are semantically inconsistent across the two views;
the two per-view results are fused in the query view by warping the
reference-view mask along the geometric correspondence.
"""

from dataclasses import dataclass, field as dataclass_field
from typing import List, Optional

import numpy as np

from .correlation import ChangeProposal, _masked_cosine
from .geometry import CorrespondenceField
from .occlusion import _nearest_indices

DEFAULT_RHO_OVERLAP = 0.5
DEFAULT_THETA_SEM = 0.6
DEFAULT_RHO_MAX = 0.8

CONTRIB_NONE = 0
CONTRIB_VIEW1 = 1
CONTRIB_VIEW2 = 2
CONTRIB_BOTH = 3


@dataclass
class SegMaskSet:
    """Class-agnostic segmentation masks with cached pixel counts."""

    masks: List[np.ndarray]
    areas: np.ndarray = dataclass_field(default=None)

    def __post_init__(self):
        for i, m in enumerate(self.masks):
            if m.dtype != np.bool_:
                raise ValueError(f"mask {i} must be boolean")
            if not m.any():
                raise ValueError(f"mask {i} is empty")
        if self.areas is None:
            self.areas = np.array([int(m.sum()) for m in self.masks], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.masks)


@dataclass
class MatchedChangeMask:
    """Union of selected segmentation masks, or the proposal as fallback."""

    mask: np.ndarray
    selected: List[int]
    fallback: bool


@dataclass
class FinalChangeMask:
    """Fused change mask in the query view with per-pixel provenance."""

    mask: np.ndarray
    contributions: np.ndarray  # uint8 codes: none/view1/view2/both


def gsm_match(p_ref: ChangeProposal, segs: Optional[SegMaskSet],
              embed_src: np.ndarray, embed_dst: np.ndarray,
              field: CorrespondenceField,
              rho_overlap: float = DEFAULT_RHO_OVERLAP,
              theta_sem: float = DEFAULT_THETA_SEM,
              rho_max: float = DEFAULT_RHO_MAX) -> MatchedChangeMask:
    """Select segmentation masks covered by the proposal and semantically
    inconsistent across views.

    A mask is selected when (a) it is no larger than `rho_max` of the
    image, (b) the proposal covers at least `rho_overlap` of it, and
    (c) the mean cross-view embedding cosine over its overlap pixels falls
    below `theta_sem`. Without segmentation masks the refined proposal is
    returned unchanged and flagged as fallback.
    """
    if p_ref.stage != "refined":
        raise ValueError("gsm_match expects a refined proposal")
    if segs is None or len(segs) == 0:
        return MatchedChangeMask(mask=p_ref.mask.copy(), selected=[], fallback=True)

    h, w = p_ref.mask.shape
    max_area = rho_max * h * w
    valid = field.valid
    selected = []
    out = np.zeros((h, w), dtype=bool)
    for i, m in enumerate(segs.masks):
        area = int(segs.areas[i])
        if area > max_area:
            continue
        if np.count_nonzero(m & p_ref.mask) / area < rho_overlap:
            continue
        sel = m & valid
        if not sel.any():
            continue  # no correspondence to judge consistency against
        targets = field.target[sel].astype(np.float64)
        cols = _nearest_indices(targets[:, 0])
        rows = _nearest_indices(targets[:, 1])
        cos = _masked_cosine(embed_src[sel].astype(np.float64),
                             embed_dst[rows, cols].astype(np.float64))
        if float(cos.mean()) >= theta_sem:
            continue
        selected.append(i)
        out |= m
    return MatchedChangeMask(mask=out, selected=selected, fallback=False)


def warp_mask(mask_other: np.ndarray,
              field_src_to_dst: CorrespondenceField) -> np.ndarray:
    """Pull a destination-view mask back into the source view.

    out(p) is set when p has a valid correspondence and the mask holds at
    the nearest destination pixel; this gather realizes the forward
    mapping of the mask without splatting holes.
    """
    if mask_other.dtype != np.bool_:
        raise ValueError("mask must be boolean")
    valid = field_src_to_dst.valid
    out = np.zeros(field_src_to_dst.shape, dtype=bool)
    if valid.any():
        targets = field_src_to_dst.target[valid].astype(np.float64)
        cols = _nearest_indices(targets[:, 0])
        rows = _nearest_indices(targets[:, 1])
        out[valid] = mask_other[rows, cols]
    return out


def fuse(mask_1: np.ndarray, mask_2_warped: np.ndarray) -> FinalChangeMask:
    """Union of the query-view mask and the warped reference-view mask."""
    if mask_1.shape != mask_2_warped.shape:
        raise ValueError("masks must share dimensions")
    contributions = (mask_1.astype(np.uint8) * CONTRIB_VIEW1
                     | mask_2_warped.astype(np.uint8) * CONTRIB_VIEW2)
    return FinalChangeMask(mask=mask_1 | mask_2_warped, contributions=contributions)
