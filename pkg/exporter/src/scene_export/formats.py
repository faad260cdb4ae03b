"""Tensor files, manifest writing, and pose-convention checks.

Tensors are written with numpy's native v1.0 format (C-order,
little-endian, dtypes f4/f8/u1/b1), which is exactly the interchange
layout the detection engine reads. Nothing here imports the engine; the
bundle contract is the file format itself.
"""

import json
from pathlib import Path

import numpy as np

ALLOWED_DTYPES = (np.dtype("<f4"), np.dtype("<f8"), np.dtype("u1"), np.dtype("?"))


class ExportError(RuntimeError):
    pass


def save_tensor(arr: np.ndarray, path) -> str:
    arr = np.asarray(arr)
    if arr.dtype == np.float64:
        arr = arr.astype(np.float32)
    if arr.dtype not in ALLOWED_DTYPES:
        raise ExportError(f"cannot export dtype {arr.dtype}")
    np.save(path, np.ascontiguousarray(arr))
    return Path(path).name


def write_manifest(out_dir, tensors: dict, seg_masks_1, seg_masks_2, meta: dict) -> Path:
    """Write every tensor plus the manifest that indexes them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, arr in tensors.items():
        manifest[name] = save_tensor(arr, out_dir / f"{name}.npy")
    for field, masks in (("seg_masks_1", seg_masks_1), ("seg_masks_2", seg_masks_2)):
        rels = []
        for i, mask in enumerate(masks):
            rels.append(save_tensor(mask.astype(bool), out_dir / f"{field}_{i:03d}.npy"))
        manifest[field] = rels
    manifest["meta"] = {str(k): str(v) for k, v in meta.items()}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# pose conventions
#
# The bundle contract fixes extrinsics as world->camera (X_cam = R X + t).
# Reconstruction models disagree on this; rather than trusting a flag, the
# exporter scores both readings by reprojected-depth consistency and keeps
# the one that explains the depth maps.


def invert_rigid(T: np.ndarray) -> np.ndarray:
    R, t = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def reprojection_consistency(K1, T1, depth_1, K2, T2, depth_2, step: int = 4) -> float:
    """Median relative gap between reprojected and estimated depth.

    Treats T1/T2 as world->camera. Small values mean the two depth maps
    and poses describe the same scene geometry.
    """
    K1 = np.asarray(K1, dtype=np.float64)
    K2 = np.asarray(K2, dtype=np.float64)
    d1 = np.asarray(depth_1, dtype=np.float64)[::step, ::step]
    h, w = depth_1.shape
    u, v = np.meshgrid(np.arange(0, w, step, dtype=np.float64),
                       np.arange(0, h, step, dtype=np.float64))
    rel = np.asarray(T2, dtype=np.float64) @ invert_rigid(np.asarray(T1, dtype=np.float64))
    rays = np.stack([(u - K1[0, 2]) / K1[0, 0], (v - K1[1, 2]) / K1[1, 1],
                     np.ones_like(u)], axis=-1)
    pts = d1[..., None] * rays
    moved = pts @ rel[:3, :3].T + rel[:3, 3]
    z2 = moved[..., 2]
    ok = (d1 > 0) & (z2 > 1e-9)
    uu = K2[0, 0] * moved[..., 0] / np.where(ok, z2, 1.0) + K2[0, 2]
    vv = K2[1, 1] * moved[..., 1] / np.where(ok, z2, 1.0) + K2[1, 2]
    ok &= (uu >= 0) & (uu <= w - 1) & (vv >= 0) & (vv <= h - 1)
    if ok.sum() < 16:
        return np.inf
    cols = np.clip(np.rint(uu[ok]).astype(int), 0, w - 1)
    rows = np.clip(np.rint(vv[ok]).astype(int), 0, h - 1)
    sampled = np.asarray(depth_2, dtype=np.float64)[rows, cols]
    scale = float(np.median(np.asarray(depth_2, dtype=np.float64)))
    if scale <= 0:
        return np.inf
    return float(np.median(np.abs(z2[ok] - sampled))) / scale


def resolve_pose_convention(K1, pose_1, depth_1, K2, pose_2, depth_2):
    """Pick the reading of (pose_1, pose_2) that matches the depth maps.

    Returns (T1, T2, convention, score) with T world->camera.
    """
    as_w2c = (np.asarray(pose_1, dtype=np.float64), np.asarray(pose_2, dtype=np.float64))
    as_c2w = (invert_rigid(as_w2c[0]), invert_rigid(as_w2c[1]))
    score_w2c = min(
        reprojection_consistency(K1, as_w2c[0], depth_1, K2, as_w2c[1], depth_2),
        reprojection_consistency(K2, as_w2c[1], depth_2, K1, as_w2c[0], depth_1))
    score_c2w = min(
        reprojection_consistency(K1, as_c2w[0], depth_1, K2, as_c2w[1], depth_2),
        reprojection_consistency(K2, as_c2w[1], depth_2, K1, as_c2w[0], depth_1))
    if score_w2c <= score_c2w:
        return as_w2c[0], as_w2c[1], "world_to_camera", score_w2c
    return as_c2w[0], as_c2w[1], "camera_to_world", score_c2w


def rotation_angle_deg(R: np.ndarray) -> float:
    return float(np.rad2deg(np.arccos(np.clip((np.trace(R[:3, :3]) - 1) / 2, -1, 1))))
