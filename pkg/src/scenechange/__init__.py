"""Training-free scene change detection for unaligned image pairs.

Externally supplied reconstruction outputs (depth, cameras, dense
features, segmentation masks) are turned into geometric correspondences,
visual-overlap and occlusion masks, and fused pixel-level change masks.
"""

from .bundle_io import (BundleError, PairBundle, load_bundle, read_tensor,
                        save_bundle, write_tensor)
from .correlation import (ChangeProposal, FeatureMapSet, SimilarityMap,
                          adaptive_threshold, initial_proposal,
                          refine_with_occlusion, resize_features, resize_grid,
                          similarity_map)
from .geometry import (Camera, CorrespondenceField, RelativePose,
                       correspondence_field, invert_pose, relative_pose,
                       reproject_pixel)
from .illumination import (IlluminationReport, color_transfer,
                           illumination_gap, preprocess_pair, retinex)
from .matching import (FinalChangeMask, MatchedChangeMask, SegMaskSet, fuse,
                       gsm_match, warp_mask)
from .metrics import (Confusion, EvalReport, PairScore, aggregate,
                      aggregate_by_group, mask_gt_outside_overlap, score,
                      score_pair)
from .occlusion import OcclusionMask, adaptive_tau, occlusion_mask, sample_depth
from .pipeline import (DetectionResult, PipelineConfig, StageError,
                       run_detect)
from .synthetic import (GroundTruth, SceneSpec, generate_scene,
                        oracle_occlusion, oracle_overlap, plane_box_spec)

__version__ = "0.1.0"

__all__ = [
    "BundleError", "PairBundle", "load_bundle", "read_tensor", "save_bundle",
    "write_tensor",
    "ChangeProposal", "FeatureMapSet", "SimilarityMap", "adaptive_threshold",
    "initial_proposal", "refine_with_occlusion", "resize_features",
    "resize_grid", "similarity_map",
    "Camera", "CorrespondenceField", "RelativePose", "correspondence_field",
    "invert_pose", "relative_pose", "reproject_pixel",
    "IlluminationReport", "color_transfer", "illumination_gap",
    "preprocess_pair", "retinex",
    "FinalChangeMask", "MatchedChangeMask", "SegMaskSet", "fuse", "gsm_match",
    "warp_mask",
    "Confusion", "EvalReport", "PairScore", "aggregate", "aggregate_by_group",
    "mask_gt_outside_overlap", "score", "score_pair",
    "OcclusionMask", "adaptive_tau", "occlusion_mask", "sample_depth",
    "DetectionResult", "PipelineConfig", "StageError", "run_detect",
    "GroundTruth", "SceneSpec", "generate_scene", "oracle_occlusion",
    "oracle_overlap", "plane_box_spec",
]
