"""Bundle exporter: reconstruction and feature extraction for image pairs."""

from .backends import (ClassicalFeatures, ClassicalGeometry, DeepFeatures,
                       DeepGeometry, FeatureResult, GeometryResult)
from .export import (ExportJob, export_features_and_masks, export_geometry,
                     load_rgb, run_export)
from .formats import (ExportError, reprojection_consistency,
                      resolve_pose_convention, rotation_angle_deg)

__version__ = "0.1.0"

__all__ = [
    "ClassicalFeatures", "ClassicalGeometry", "DeepFeatures", "DeepGeometry",
    "FeatureResult", "GeometryResult", "ExportJob", "export_geometry",
    "export_features_and_masks", "load_rgb", "run_export", "ExportError",
    "reprojection_consistency", "resolve_pose_convention", "rotation_angle_deg",
]
