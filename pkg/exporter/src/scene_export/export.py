"""Export pipeline: reconstruct, extract, convert, and write a bundle.

Preprocessing (when enabled) is delegated to the detection engine's
`preprocess` command and feeds only the reconstruction backend; feature
extraction always sees the original images, and the originals are what
the bundle stores.
"""

import json
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from PIL import Image

from .backends import (ExportError, FeatureResult, GeometryResult,
                       feature_backend, geometry_backend)
from .formats import (resolve_pose_convention, reprojection_consistency,
                      rotation_angle_deg, write_manifest)

PREPROCESS_METHODS = ("auto", "none", "retinex", "color-transfer")


@dataclass
class ExportJob:
    img1: Path
    img2: Path
    out_dir: Path
    layer: int = 17
    preprocess: str = "auto"
    backend: str = "auto"  # auto | classical | deep
    engine_cli: Optional[list] = None  # override for the detection engine CLI
    extras: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.preprocess not in PREPROCESS_METHODS:
            raise ExportError(f"preprocess must be one of {PREPROCESS_METHODS}")
        if self.backend not in ("auto", "classical", "deep"):
            raise ExportError("backend must be auto, classical, or deep")


def load_rgb(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def _engine_command(job: ExportJob) -> list:
    if job.engine_cli:
        return list(job.engine_cli)
    exe = shutil.which("scenechange")
    if exe:
        return [exe]
    return [sys.executable, "-m", "scenechange.cli"]


def _preprocess_pair(job: ExportJob, img1_path: Path, img2_path: Path):
    """Run the engine's preprocess command; returns images plus report."""
    with tempfile.TemporaryDirectory() as tmp:
        cmd = _engine_command(job) + [
            "preprocess", "--img1", str(img1_path), "--img2", str(img2_path),
            "--out", tmp, "--method", job.preprocess]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExportError(f"preprocess command failed: {proc.stderr.strip()}")
        out1 = load_rgb(Path(tmp) / "preprocessed_1.png")
        out2 = load_rgb(Path(tmp) / "preprocessed_2.png")
        report = json.loads((Path(tmp) / "report.json").read_text())
    return out1, out2, report


def _resolve_backends(job: ExportJob):
    if job.backend in ("classical", "deep"):
        return (geometry_backend(job.backend), feature_backend(job.backend, job.layer),
                job.backend)
    # auto: prefer the deep models, fall back when they are not installed
    try:
        geo = geometry_backend("deep")
        feats = feature_backend("deep", job.layer)
        import vggt  # noqa: F401 - availability probe only
        import segment_anything  # noqa: F401
        return geo, feats, "deep"
    except (ImportError, ExportError):
        return (geometry_backend("classical"),
                feature_backend("classical", job.layer), "classical")


def export_geometry(job: ExportJob, img1: np.ndarray, img2: np.ndarray,
                    backend) -> tuple:
    """Reconstruct the pair and convert poses to world->camera.

    The convention is not taken on faith: both readings of the backend's
    poses are scored by reprojected-depth consistency and the coherent one
    is kept and recorded.
    """
    geo: GeometryResult = backend.reconstruct(img1, img2)
    T1, T2, convention, score = resolve_pose_convention(
        geo.intrinsics_1, geo.pose_1, geo.depth_1,
        geo.intrinsics_2, geo.pose_2, geo.depth_2)
    meta = dict(geo.notes)
    meta["pose_convention_input"] = convention
    meta["reprojection_consistency"] = f"{score:.6f}"
    rel = T2 @ np.linalg.inv(T1)
    meta["relative_rotation_deg"] = f"{rotation_angle_deg(rel):.3f}"
    tensors = {
        "depth_1": geo.depth_1.astype(np.float32),
        "depth_2": geo.depth_2.astype(np.float32),
        "intrinsics_1": _normalize_K(geo.intrinsics_1),
        "intrinsics_2": _normalize_K(geo.intrinsics_2),
        "extrinsics_1": _exact_bottom_row(T1),
        "extrinsics_2": _exact_bottom_row(T2),
    }
    return tensors, meta


def _normalize_K(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K, dtype=np.float64) / float(K[2, 2])
    K[0, 1] = 0.0  # the bundle contract requires zero skew
    K[1, 0] = 0.0
    K[2, 0] = K[2, 1] = 0.0
    return K.astype(np.float32)


def _exact_bottom_row(T: np.ndarray) -> np.ndarray:
    out = np.asarray(T, dtype=np.float32).copy()
    out[3] = np.array([0, 0, 0, 1], dtype=np.float32)
    return out


def export_features_and_masks(job: ExportJob, img1: np.ndarray,
                              img2: np.ndarray, backend) -> tuple:
    f1: FeatureResult = backend.extract(img1)
    f2: FeatureResult = backend.extract(img2)
    tensors = {
        "features_1": f1.keys, "features_2": f2.keys,
        "embed_1": f1.embed, "embed_2": f2.embed,
    }
    meta = {
        "feature_heads": str(f1.keys.shape[0]),
        "feature_dim": str(f1.keys.shape[3]),
        "seg_masks_1": str(len(f1.seg_masks)),
        "seg_masks_2": str(len(f2.seg_masks)),
    }
    return tensors, (f1.seg_masks, f2.seg_masks), meta


def run_export(job: ExportJob) -> Path:
    """Produce a complete bundle directory from one image pair."""
    img1 = load_rgb(job.img1)
    img2 = load_rgb(job.img2)
    if img2.shape != img1.shape:
        img2 = np.asarray(Image.fromarray(img2).resize(
            (img1.shape[1], img1.shape[0]), Image.BILINEAR))
    geo_backend, feat_backend, backend_name = _resolve_backends(job)

    meta: Dict[str, str] = {
        "source": "export",
        "backend": backend_name,
        "layer": str(job.layer),
        "img1": str(job.img1),
        "img2": str(job.img2),
    }
    meta.update(job.extras)

    recon_1, recon_2 = img1, img2
    if job.preprocess != "none":
        recon_1, recon_2, report = _preprocess_pair(job, job.img1, job.img2)
        meta["preprocess_method"] = report["method"]
        meta["preprocess_triggered"] = str(report["triggered"])
        meta["gray_gap"] = f"{report['gray_gap']:.6f}"
        meta["hist_gap"] = f"{report['hist_gap']:.6f}"
    else:
        meta["preprocess_method"] = "none"

    geo_tensors, geo_meta = export_geometry(job, recon_1, recon_2, geo_backend)
    feat_tensors, seg_masks, feat_meta = export_features_and_masks(
        job, img1, img2, feat_backend)
    meta.update(geo_meta)
    meta.update(feat_meta)

    tensors = {"image_1": img1.astype(np.uint8), "image_2": img2.astype(np.uint8)}
    tensors.update(geo_tensors)
    tensors.update(feat_tensors)
    return write_manifest(job.out_dir, tensors, seg_masks[0], seg_masks[1], meta)
