"""End-to-end change detection over a pair bundle.

Runs, in order: dense correspondence in both directions, occlusion
detection, feature-correlation change proposals with occlusion filtering,
segmentation-mask matching per view, and fusion of the reference-view
result into the query view.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Optional

import numpy as np

from .bundle_io import BundleError, PairBundle
from .correlation import (ChangeProposal, FeatureMapSet, SimilarityMap,
                          initial_proposal, refine_with_occlusion,
                          resize_features, resize_grid, similarity_map)
from .geometry import Camera, CorrespondenceField, correspondence_field
from .matching import (FinalChangeMask, MatchedChangeMask, SegMaskSet, fuse,
                       gsm_match, warp_mask)
from .occlusion import OcclusionMask, occlusion_mask

ILLUMINATION_METHODS = ("auto", "none", "retinex", "color_transfer")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    """Every tunable of the detection pipeline in one place."""

    alpha: float = 0.03
    kappa: float = 2.5
    layer: int = 17
    rho_overlap: float = 0.5
    theta_sem: float = 0.6
    rho_max: float = 0.8
    illumination: str = "auto"
    sigma_frac: float = 0.1
    occlusion_filtering: bool = True
    dump_intermediates: bool = False

    def validate(self) -> "PipelineConfig":
        if self.alpha <= 0 or self.kappa <= 0:
            raise ValueError("alpha and kappa must be positive")
        if not 0 < self.rho_overlap <= 1:
            raise ValueError("rho_overlap must lie in (0, 1]")
        if not -1 <= self.theta_sem <= 1:
            raise ValueError("theta_sem must lie in [-1, 1]")
        if not 0 < self.rho_max <= 1:
            raise ValueError("rho_max must lie in (0, 1]")
        if not 0 < self.sigma_frac < 1:
            raise ValueError("sigma_frac must lie in (0, 1)")
        if self.illumination not in ILLUMINATION_METHODS:
            raise ValueError(f"illumination must be one of {ILLUMINATION_METHODS}")
        if self.layer < 0:
            raise ValueError("layer must be non-negative")
        return self

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        data = json.loads(open(path).read())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ViewPass:
    """Intermediates of one direction of the symmetric pipeline."""

    field: CorrespondenceField
    occlusion: OcclusionMask
    similarity: SimilarityMap
    initial: ChangeProposal
    refined: ChangeProposal
    match: MatchedChangeMask


@dataclass
class DetectionResult:
    final: FinalChangeMask
    view1: ViewPass
    view2: ViewPass
    warped_change_2: np.ndarray
    config: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def fallback(self) -> bool:
        return self.view1.match.fallback or self.view2.match.fallback


def _camera(bundle: PairBundle, view: int) -> Camera:
    K = getattr(bundle, f"intrinsics_{view}").astype(np.float64)
    T = getattr(bundle, f"extrinsics_{view}").astype(np.float64)
    return Camera(K=K, T=T, width=bundle.width, height=bundle.height)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - re-raised with stage context
        raise StageError(name, exc) from exc


def _full_res_features(bundle: PairBundle, view: int, h: int, w: int,
                       layer: int) -> FeatureMapSet:
    keys = getattr(bundle, f"features_{view}")
    embed = getattr(bundle, f"embed_{view}")
    keys = resize_features(keys, h, w)
    embed = resize_grid(embed, h, w)
    return FeatureMapSet(keys=keys, embed=embed, layer=layer)


def _view_pass(name: str, feats_src: FeatureMapSet, feats_dst: FeatureMapSet,
               field_: CorrespondenceField, depth_other: np.ndarray,
               segs, cfg: PipelineConfig) -> ViewPass:
    occ = _stage(f"occlusion_{name}", occlusion_mask, field_, depth_other,
                 alpha=cfg.alpha, kappa=cfg.kappa)
    sim = _stage(f"similarity_{name}", similarity_map, feats_src, feats_dst, field_)
    init = _stage(f"proposal_{name}", initial_proposal, sim)
    if cfg.occlusion_filtering:
        refined = _stage(f"refine_{name}", refine_with_occlusion, init, occ)
    else:
        refined = ChangeProposal(mask=init.mask.copy(),
                                 threshold_used=init.threshold_used, stage="refined")
    match = _stage(f"match_{name}", gsm_match, refined, segs,
                   feats_src.embed, feats_dst.embed, field_,
                   rho_overlap=cfg.rho_overlap, theta_sem=cfg.theta_sem,
                   rho_max=cfg.rho_max)
    if cfg.occlusion_filtering and np.count_nonzero(refined.mask & occ.mask):
        raise StageError(f"refine_{name}",
                         AssertionError("refined proposal intersects occlusion mask"))
    return ViewPass(field=field_, occlusion=occ, similarity=sim,
                    initial=init, refined=refined, match=match)


def run_detect(bundle: PairBundle, cfg: Optional[PipelineConfig] = None) -> DetectionResult:
    """Predict the change mask of a bundle in the query (first) view.

    The bundle must carry key features and embeddings for both views;
    segmentation masks are optional, falling back to the coarse refined
    proposals when absent. Deterministic given (bundle, config).
    """
    cfg = (cfg or PipelineConfig()).validate()
    for name in ("features_1", "features_2", "embed_1", "embed_2"):
        if getattr(bundle, name) is None:
            raise BundleError(f"detection requires {name}")
    h, w = bundle.height, bundle.width
    cam1 = _camera(bundle, 1)
    cam2 = _camera(bundle, 2)

    feats_1 = _stage("features_1", _full_res_features, bundle, 1, h, w, cfg.layer)
    feats_2 = _stage("features_2", _full_res_features, bundle, 2, h, w, cfg.layer)
    field_12 = _stage("correspondence_1to2", correspondence_field,
                      bundle.depth_1, cam1, cam2)
    field_21 = _stage("correspondence_2to1", correspondence_field,
                      bundle.depth_2, cam2, cam1)

    segs_1 = SegMaskSet(bundle.seg_masks_1) if bundle.seg_masks_1 else None
    segs_2 = SegMaskSet(bundle.seg_masks_2) if bundle.seg_masks_2 else None

    pass_1 = _view_pass("1", feats_1, feats_2, field_12, bundle.depth_2, segs_1, cfg)
    pass_2 = _view_pass("2", feats_2, feats_1, field_21, bundle.depth_1, segs_2, cfg)

    warped_2 = _stage("warp_2to1", warp_mask, pass_2.match.mask, field_12)
    final = _stage("fuse", fuse, pass_1.match.mask, warped_2)
    return DetectionResult(final=final, view1=pass_1, view2=pass_2,
                           warped_change_2=warped_2, config=cfg)


def intermediate_arrays(result: DetectionResult) -> Dict[str, np.ndarray]:
    """Flat name -> array view of every stage output, for dumping."""
    out: Dict[str, np.ndarray] = {}
    for view, pass_ in (("1", result.view1), ("2", result.view2)):
        suffix = "1to2" if view == "1" else "2to1"
        out[f"field_{suffix}_target"] = pass_.field.target
        out[f"field_{suffix}_depth"] = pass_.field.depth_in_target
        out[f"field_{suffix}_valid"] = pass_.field.valid
        out[f"occlusion_{view}"] = pass_.occlusion.mask
        out[f"similarity_{view}"] = pass_.similarity.values
        out[f"proposal_initial_{view}"] = pass_.initial.mask
        out[f"proposal_refined_{view}"] = pass_.refined.mask
        out[f"change_{view}"] = pass_.match.mask
    out["change_2_warped"] = result.warped_change_2
    out["final_mask"] = result.final.mask
    out["final_contributions"] = result.final.contributions
    return out
