"""Cross-view pixel correspondence from depth and camera parameters.

Pixels of a source view are lifted to 3D with their depth, moved into the
destination camera frame, and projected back to continuous pixel
coordinates. Pixels whose reprojection lands inside the destination image
domain form the visual-overlap mask.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

# a reprojected point closer than this to the camera plane is invalid
EPS_BEHIND = 1e-6
# float-dust guard at the frame edge; accepted targets are clamped back
# into the closed interval so nearest-neighbor lookups stay in bounds
EDGE_TOL = 1e-6


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: 3x3 intrinsics and a 4x4 world->camera pose."""

    K: np.ndarray
    T: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        T = np.asarray(self.T, dtype=np.float64)
        if K.shape != (3, 3) or T.shape != (4, 4):
            raise ValueError("camera needs 3x3 intrinsics and a 4x4 pose")
        if K[2, 2] != 1:
            raise ValueError("intrinsics[2,2] must equal 1")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal entries must be positive")
        if K[0, 1] != 0:
            raise ValueError("intrinsics must have zero skew")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "T", T)


@dataclass(frozen=True)
class RelativePose:
    """Rigid transform taking source-camera coordinates to destination."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-5):
            raise ValueError("degenerate rotation: R^T R != I")
        if not np.isclose(np.linalg.det(R), 1.0, atol=1e-5):
            raise ValueError("degenerate rotation: det(R) != 1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m


@dataclass
class CorrespondenceField:
    """Per-pixel continuous target coordinates in the other view.

    `target` holds (u, v) destination coordinates (NaN where invalid),
    `depth_in_target` the depth of the reprojected point in the
    destination frame, and `valid` the visual-overlap mask.
    """

    target: np.ndarray
    depth_in_target: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.valid.shape


def invert_pose(T: np.ndarray) -> np.ndarray:
    """Analytic inverse of a 4x4 rigid transform."""
    T = np.asarray(T, dtype=np.float64)
    R = T[:3, :3]
    t = T[:3, 3]
    inv = np.eye(4)
    inv[:3, :3] = R.T
    inv[:3, 3] = -R.T @ t
    return inv


def relative_pose(T_i: np.ndarray, T_j: np.ndarray) -> RelativePose:
    """Transform mapping camera-i coordinates into camera j (T_j . T_i^-1)."""
    rel = np.asarray(T_j, dtype=np.float64) @ invert_pose(T_i)
    return RelativePose(R=rel[:3, :3], t=rel[:3, 3])


def reproject_pixel(p1, d: float, K1: np.ndarray, K2: np.ndarray,
                    rel: RelativePose) -> Tuple[np.ndarray, float]:
    """Reproject one pixel of the source view into the destination view.

    Returns the continuous destination pixel and the depth of the moved
    point in the destination frame. A point on or behind the destination
    camera plane yields NaN coordinates rather than an exception.
    """
    if d <= 0:
        raise ValueError("depth must be positive")
    p1 = np.asarray(p1, dtype=np.float64)
    ray = np.linalg.inv(np.asarray(K1, dtype=np.float64)) @ np.array([p1[0], p1[1], 1.0])
    x2 = rel.R @ (d * ray) + rel.t
    z2 = float(x2[2])
    if z2 <= EPS_BEHIND:
        return np.array([np.nan, np.nan]), z2
    proj = np.asarray(K2, dtype=np.float64) @ x2
    return proj[:2] / z2, z2


def correspondence_field(depth_src: np.ndarray, cam_src: Camera,
                         cam_dst: Camera) -> CorrespondenceField:
    """Dense reprojection of every source pixel into the destination view.

    A pixel is valid iff it has positive depth, its moved point lies in
    front of the destination camera, and its projection falls inside the
    closed domain [0, W-1] x [0, H-1].
    """
    depth_src = np.asarray(depth_src)
    h, w = depth_src.shape
    if (h, w) != (cam_src.height, cam_src.width):
        raise ValueError("depth map dimensions do not match the source camera")
    rel = relative_pose(cam_src.T, cam_dst.T)

    fx1, fy1 = cam_src.K[0, 0], cam_src.K[1, 1]
    cx1, cy1 = cam_src.K[0, 2], cam_src.K[1, 2]
    fx2, fy2 = cam_dst.K[0, 0], cam_dst.K[1, 1]
    cx2, cy2 = cam_dst.K[0, 2], cam_dst.K[1, 2]

    u, v = np.meshgrid(np.arange(w, dtype=np.float64),
                       np.arange(h, dtype=np.float64))
    d = depth_src.astype(np.float64)
    # camera-frame point of each pixel, then rigid move into the destination
    x = d * (u - cx1) / fx1
    y = d * (v - cy1) / fy1
    R, t = rel.R, rel.t
    x2 = R[0, 0] * x + R[0, 1] * y + R[0, 2] * d + t[0]
    y2 = R[1, 0] * x + R[1, 1] * y + R[1, 2] * d + t[1]
    z2 = R[2, 0] * x + R[2, 1] * y + R[2, 2] * d + t[2]

    has_depth = d > 0
    in_front = z2 > EPS_BEHIND
    safe_z = np.where(in_front, z2, 1.0)
    uu = fx2 * x2 / safe_z + cx2
    vv = fy2 * y2 / safe_z + cy2
    inside = ((uu >= -EDGE_TOL) & (uu <= cam_dst.width - 1 + EDGE_TOL)
              & (vv >= -EDGE_TOL) & (vv <= cam_dst.height - 1 + EDGE_TOL))
    valid = has_depth & in_front & inside

    target = np.full((h, w, 2), np.nan, dtype=np.float64)
    target[valid, 0] = np.clip(uu[valid], 0.0, cam_dst.width - 1)
    target[valid, 1] = np.clip(vv[valid], 0.0, cam_dst.height - 1)
    depth_out = np.where(valid, z2, np.nan)
    return CorrespondenceField(target=target.astype(np.float32),
                               depth_in_target=depth_out.astype(np.float32),
                               valid=valid)
