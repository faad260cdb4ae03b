"""Synthetic two-view scenes with exact geometry and brute-force oracles.

Scenes are built from axis-aligned rectangles and boxes, ray-cast
analytically from both cameras, and edited (insert/remove/recolor)
between the two time points. Every output is exact and deterministic
given the scene seed: depth maps, cameras, ground-truth change and
occlusion masks, and per-pixel unit-vector features keyed on surface
identity and albedo, so changed pixels carry near-orthogonal features
across the views.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import binary_dilation

from .bundle_io import PairBundle
from .geometry import Camera, EDGE_TOL, EPS_BEHIND

RAY_MIN_DEPTH = 1e-9
ORACLE_DEPTH_SLACK = 1e-6
VOID_KEY = "__void__"
VOID_COLOR = (30, 30, 30)

_AXES = {"x": 0, "y": 1, "z": 2}


# ---------------------------------------------------------------------------
# scene primitives


@dataclass(frozen=True)
class Decal:
    """Albedo override on a sub-region of a rectangle's in-plane axes."""

    bounds: Tuple[Tuple[float, float], Tuple[float, float]]
    albedo: Tuple[int, int, int]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: `axis` is the normal direction."""

    axis: int
    offset: float
    bounds: Tuple[Tuple[float, float], Tuple[float, float]]
    albedo: Tuple[int, int, int]
    surface_id: str
    decals: Tuple[Decal, ...] = ()


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    albedo: Tuple[int, int, int]
    surface_id: str


@dataclass(frozen=True)
class Insert:
    surface: object


@dataclass(frozen=True)
class Remove:
    target: str


@dataclass(frozen=True)
class Recolor:
    target: str
    albedo: Tuple[int, int, int]
    region: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None


@dataclass
class SceneSpec:
    """Full description of a synthetic pair: geometry, cameras, edits."""

    surfaces: List[object]
    cam1: Camera
    cam2: Camera
    changes: List[object]
    seed: int
    resolution: Tuple[int, int]  # (H, W)
    heads: int = 4
    key_dim: int = 32
    embed_dim: int = 64
    noise_deg: float = 5.0


@dataclass
class GroundTruth:
    """Exact per-view reference masks plus the underlying world states."""

    change_1: np.ndarray
    change_2: np.ndarray
    change_full_1: np.ndarray
    change_full_2: np.ndarray
    occlusion_1: np.ndarray
    occlusion_2: np.ndarray
    overlap_1: np.ndarray
    overlap_2: np.ndarray
    world_pre: List[object]
    world_post: List[object]
    cam1: Camera = None
    cam2: Camera = None


def apply_changes(surfaces: Sequence[object], changes: Sequence[object]) -> List[object]:
    """World state after applying insert/remove/recolor edits."""
    out = list(surfaces)
    for change in changes:
        if isinstance(change, Insert):
            out.append(change.surface)
        elif isinstance(change, Remove):
            matches = [s for s in out if s.surface_id == change.target]
            if not matches:
                raise ValueError(f"remove target {change.target!r} not found")
            out = [s for s in out if s.surface_id != change.target]
        elif isinstance(change, Recolor):
            hit = False
            for i, s in enumerate(out):
                if s.surface_id != change.target:
                    continue
                hit = True
                if change.region is None:
                    out[i] = replace(s, albedo=tuple(change.albedo))
                else:
                    if not isinstance(s, Rect):
                        raise ValueError("region recolor requires a rectangle")
                    decal = Decal(bounds=change.region, albedo=tuple(change.albedo))
                    out[i] = replace(s, decals=s.decals + (decal,))
            if not hit:
                raise ValueError(f"recolor target {change.target!r} not found")
        else:
            raise ValueError(f"unknown change {change!r}")
    return out


def _facets(surfaces: Sequence[object]) -> List[Rect]:
    facets = []
    for s in surfaces:
        if isinstance(s, Rect):
            facets.append(s)
        elif isinstance(s, Box):
            lo, hi = np.asarray(s.lo, float), np.asarray(s.hi, float)
            for axis in range(3):
                b1, b2 = [a for a in range(3) if a != axis]
                bounds = ((lo[b1], hi[b1]), (lo[b2], hi[b2]))
                for offset in (lo[axis], hi[axis]):
                    facets.append(Rect(axis=axis, offset=float(offset), bounds=bounds,
                                       albedo=s.albedo, surface_id=s.surface_id))
        else:
            raise ValueError(f"unknown surface {s!r}")
    return facets


# ---------------------------------------------------------------------------
# ray casting


@dataclass
class CastResult:
    """Per-pixel hit data; `code` packs surface identity and albedo."""

    depth: np.ndarray   # float64, 0 where no surface is hit
    code: np.ndarray    # int64, 0 where no surface is hit
    albedo: np.ndarray  # uint8 ...x3
    loc1: np.ndarray    # in-plane hit coordinates on the facet
    loc2: np.ndarray
    id_names: List[str]


def cast_rays(cam: Camera, surfaces: Sequence[object], uv=None,
              id_names: Optional[List[str]] = None) -> CastResult:
    """Exact nearest-hit ray cast of pixel rays against the surface list.

    `uv` defaults to the integer pixel grid; continuous coordinates are
    accepted. Surfaces earlier in the list win exact depth ties.
    """
    if uv is None:
        u, v = np.meshgrid(np.arange(cam.width, dtype=np.float64),
                           np.arange(cam.height, dtype=np.float64))
    else:
        uv = np.asarray(uv, dtype=np.float64)
        u, v = uv[..., 0], uv[..., 1]
    fx, fy = cam.K[0, 0], cam.K[1, 1]
    cx, cy = cam.K[0, 2], cam.K[1, 2]
    R = cam.T[:3, :3]
    t = cam.T[:3, 3]
    origin = -R.T @ t
    # direction per unit camera depth: world point = origin + z * direction
    d_cam = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones_like(u)], axis=-1)
    direction = d_cam @ R  # rows of R are camera axes in world coordinates

    if id_names is None:
        id_names = []
        for s in surfaces:
            if s.surface_id not in id_names:
                id_names.append(s.surface_id)
    sid_of = {name: i for i, name in enumerate(id_names)}

    facets = _facets(surfaces)
    shape = u.shape
    best_z = np.full(shape, np.inf)
    facet_idx = np.full(shape, -1, dtype=np.int32)
    loc1 = np.zeros(shape)
    loc2 = np.zeros(shape)
    for fi, f in enumerate(facets):
        a = f.axis
        b1, b2 = [ax for ax in range(3) if ax != a]
        denom = direction[..., a]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (f.offset - origin[a]) / denom
        p1 = origin[b1] + z * direction[..., b1]
        p2 = origin[b2] + z * direction[..., b2]
        ok = ((np.abs(denom) > 1e-12) & (z > RAY_MIN_DEPTH)
              & (p1 >= f.bounds[0][0]) & (p1 <= f.bounds[0][1])
              & (p2 >= f.bounds[1][0]) & (p2 <= f.bounds[1][1]))
        better = ok & (z < best_z)
        best_z[better] = z[better]
        facet_idx[better] = fi
        loc1[better] = p1[better]
        loc2[better] = p2[better]

    depth = np.where(facet_idx >= 0, best_z, 0.0)
    albedo = np.zeros(shape + (3,), dtype=np.uint8)
    sid_map = np.full(shape, -1, dtype=np.int64)
    for fi, f in enumerate(facets):
        m = facet_idx == fi
        if not m.any():
            continue
        albedo[m] = f.albedo
        sid_map[m] = sid_of[f.surface_id]
        for decal in f.decals:
            dm = (m & (loc1 >= decal.bounds[0][0]) & (loc1 <= decal.bounds[0][1])
                  & (loc2 >= decal.bounds[1][0]) & (loc2 <= decal.bounds[1][1]))
            albedo[dm] = decal.albedo
    code = ((sid_map + 1) << 24 | albedo[..., 0].astype(np.int64) << 16
            | albedo[..., 1].astype(np.int64) << 8 | albedo[..., 2].astype(np.int64))
    return CastResult(depth=depth, code=code, albedo=albedo,
                      loc1=loc1, loc2=loc2, id_names=list(id_names))


def _key_name(code: int, id_names: List[str]) -> str:
    sid = (code >> 24) - 1
    r, g, b = (code >> 16) & 255, (code >> 8) & 255, code & 255
    name = VOID_KEY if sid < 0 else id_names[sid]
    return f"{name}|{r}|{g}|{b}"


def _lattice_hash(i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-random value in [0, 1) per integer lattice point."""
    h = (i.astype(np.uint32) * np.uint32(73856093)
         ^ j.astype(np.uint32) * np.uint32(19349663))
    h ^= h >> np.uint32(13)
    h *= np.uint32(2654435761)
    h ^= h >> np.uint32(16)
    return h.astype(np.float64) / 2.0 ** 32


def _value_noise(x: np.ndarray, y: np.ndarray, scale: float) -> np.ndarray:
    """Smooth surface-attached noise; identical from any viewpoint."""
    gx, gy = x / scale, y / scale
    # keep lattice indices positive so the uint32 hash is well defined
    gx = gx + 2.0 ** 16
    gy = gy + 2.0 ** 16
    ix, iy = np.floor(gx).astype(np.int64), np.floor(gy).astype(np.int64)
    fx, fy = gx - ix, gy - iy
    fx = fx * fx * (3 - 2 * fx)
    fy = fy * fy * (3 - 2 * fy)
    v00 = _lattice_hash(ix, iy)
    v10 = _lattice_hash(ix + 1, iy)
    v01 = _lattice_hash(ix, iy + 1)
    v11 = _lattice_hash(ix + 1, iy + 1)
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy


def _render_image(cast: CastResult) -> np.ndarray:
    """Checker plus value-noise shading of the hit albedo.

    The texture is a function of the surface-local hit coordinates, so the
    same surface point renders consistently from both viewpoints.
    """
    checker = (np.floor(cast.loc1 / 0.5) + np.floor(cast.loc2 / 0.5)) % 2
    noise = (0.6 * _value_noise(cast.loc1, cast.loc2, 0.23)
             + 0.4 * _value_noise(cast.loc2, cast.loc1, 0.061))
    shade = (0.62 + 0.16 * checker + 0.30 * noise)[..., None]
    img = np.clip(np.rint(cast.albedo.astype(np.float64) * shade), 0, 255)
    img[cast.depth == 0] = VOID_COLOR
    return img.astype(np.uint8)


# ---------------------------------------------------------------------------
# synthetic features


def _base_direction(key: str, salt: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(f"{key}|{salt}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _noisy_unit_field(base: np.ndarray, rng: np.random.Generator,
                      max_deg: float) -> np.ndarray:
    """Rotate each unit vector by a random angle <= max_deg."""
    shape = base.shape
    angle = rng.uniform(0.0, np.deg2rad(max_deg), size=shape[:-1] + (1,))
    noise = rng.normal(size=shape)
    perp = noise - np.sum(noise * base, axis=-1, keepdims=True) * base
    norm = np.linalg.norm(perp, axis=-1, keepdims=True)
    perp = perp / np.where(norm > 1e-12, norm, 1.0)
    return np.cos(angle) * base + np.sin(angle) * perp


def _feature_stack(cast: CastResult, spec: SceneSpec, view: int):
    """Per-pixel unit vectors keyed on (surface id, albedo), plus embedding."""
    codes, inverse = np.unique(cast.code, return_inverse=True)
    inverse = inverse.reshape(cast.code.shape)
    names = [_key_name(int(c), cast.id_names) for c in codes]

    heads = []
    for head in range(spec.heads):
        table = np.stack([_base_direction(n, f"key{head}", spec.key_dim) for n in names])
        base = table[inverse]
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, view, 7, head]))
        heads.append(_noisy_unit_field(base, rng, spec.noise_deg))
    keys = np.stack(heads).astype(np.float32)

    table = np.stack([_base_direction(n, "embed", spec.embed_dim) for n in names])
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, view, 8]))
    embed = _noisy_unit_field(table[inverse], rng, spec.noise_deg).astype(np.float32)
    return keys, embed


def _seg_masks(cast: CastResult) -> List[np.ndarray]:
    """One class-agnostic mask per visible (surface, albedo) region."""
    masks = []
    for code in np.unique(cast.code):
        if (code >> 24) == 0:  # void
            continue
        m = cast.code == code
        if m.any():
            masks.append(m)
    return masks


# ---------------------------------------------------------------------------
# oracles (independent reprojection route through world coordinates)


def _oracle_reproject(depth_src, cam_src: Camera, cam_dst: Camera):
    """Reprojection via explicit homogeneous matrices.

    Deliberately routed through world coordinates (T_src inverse then
    T_dst) rather than a precomposed relative pose, as an independent
    check of the correspondence implementation.
    """
    d = np.asarray(depth_src, dtype=np.float64)
    h, w = d.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pix = np.stack([u.ravel(), v.ravel(), np.ones(h * w)])
    rays = np.linalg.inv(cam_src.K) @ pix
    pts_cam = rays * d.ravel()
    pts_h = np.vstack([pts_cam, np.ones(h * w)])
    world = np.linalg.inv(cam_src.T) @ pts_h
    cam2 = cam_dst.T @ world
    z2 = cam2[2].reshape(h, w)
    proj = cam_dst.K @ cam2[:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        uu = (proj[0] / proj[2]).reshape(h, w)
        vv = (proj[1] / proj[2]).reshape(h, w)
    return uu, vv, z2


def _bundle_view(bundle: PairBundle, view: int):
    if view == 1:
        depth = bundle.depth_1
        cams = (bundle.intrinsics_1, bundle.extrinsics_1,
                bundle.intrinsics_2, bundle.extrinsics_2)
    elif view == 2:
        depth = bundle.depth_2
        cams = (bundle.intrinsics_2, bundle.extrinsics_2,
                bundle.intrinsics_1, bundle.extrinsics_1)
    else:
        raise ValueError("view must be 1 or 2")
    h, w = depth.shape
    cam_src = Camera(K=cams[0].astype(np.float64), T=cams[1].astype(np.float64),
                     width=w, height=h)
    cam_dst = Camera(K=cams[2].astype(np.float64), T=cams[3].astype(np.float64),
                     width=w, height=h)
    return depth, cam_src, cam_dst


def oracle_overlap(bundle: PairBundle, view: int = 1) -> np.ndarray:
    """Brute-force visual-overlap mask by exhaustive reprojection membership."""
    depth, cam_src, cam_dst = _bundle_view(bundle, view)
    uu, vv, z2 = _oracle_reproject(depth, cam_src, cam_dst)
    return ((np.asarray(depth, np.float64) > 0) & (z2 > EPS_BEHIND)
            & (uu >= -EDGE_TOL) & (uu <= cam_dst.width - 1 + EDGE_TOL)
            & (vv >= -EDGE_TOL) & (vv <= cam_dst.height - 1 + EDGE_TOL))


def oracle_occlusion(bundle: PairBundle, world_other: Sequence[object],
                     view: int = 1) -> np.ndarray:
    """Brute-force occlusion mask against the other view's true geometry.

    Each overlapping pixel's reprojected depth is compared with the exact
    nearest surface intersection along the other camera's ray through the
    continuous reprojected coordinate; no adaptive threshold, only a fixed
    slack against float round-off.
    """
    depth, cam_src, cam_dst = _bundle_view(bundle, view)
    uu, vv, z2 = _oracle_reproject(depth, cam_src, cam_dst)
    valid = oracle_overlap(bundle, view)
    out = np.zeros(valid.shape, dtype=bool)
    if not valid.any():
        return out
    uv = np.stack([np.clip(uu[valid], 0, cam_dst.width - 1),
                   np.clip(vv[valid], 0, cam_dst.height - 1)], axis=-1)
    true_hit = cast_rays(cam_dst, world_other, uv=uv)
    blocked = (true_hit.depth > 0) & (z2[valid] > true_hit.depth + ORACLE_DEPTH_SLACK)
    out[valid] = blocked
    return out


def discontinuity_band(depth: np.ndarray, rel_jump: float = 0.05,
                       radius: int = 2) -> np.ndarray:
    """Pixels within `radius` of a relative depth jump larger than `rel_jump`."""
    d = np.asarray(depth, dtype=np.float64)
    edges = np.zeros(d.shape, dtype=bool)
    jump_x = np.abs(np.diff(d, axis=1)) > rel_jump * np.minimum(d[:, 1:], d[:, :-1])
    jump_y = np.abs(np.diff(d, axis=0)) > rel_jump * np.minimum(d[1:, :], d[:-1, :])
    edges[:, 1:] |= jump_x
    edges[:, :-1] |= jump_x
    edges[1:, :] |= jump_y
    edges[:-1, :] |= jump_y
    if radius > 0:
        edges = binary_dilation(edges, iterations=radius)
    return edges


# ---------------------------------------------------------------------------
# scene generation


def generate_scene(spec: SceneSpec) -> Tuple[PairBundle, GroundTruth]:
    """Ray-cast both views of a scene pair and assemble bundle plus truth."""
    h, w = spec.resolution
    if (spec.cam1.height, spec.cam1.width) != (h, w) or \
            (spec.cam2.height, spec.cam2.width) != (h, w):
        raise ValueError("camera dimensions must match the scene resolution")
    world_pre = list(spec.surfaces)
    world_post = apply_changes(world_pre, spec.changes)
    id_names = []
    for s in world_pre + world_post:
        if s.surface_id not in id_names:
            id_names.append(s.surface_id)

    cast_1 = cast_rays(spec.cam1, world_pre, id_names=id_names)
    cast_2 = cast_rays(spec.cam2, world_post, id_names=id_names)
    if not (cast_1.depth > 0).any() or not (cast_2.depth > 0).any():
        raise ValueError("degenerate camera: no surface visible")
    cast_1_post = cast_rays(spec.cam1, world_post, id_names=id_names)
    cast_2_pre = cast_rays(spec.cam2, world_pre, id_names=id_names)

    keys_1, embed_1 = _feature_stack(cast_1, spec, view=1)
    keys_2, embed_2 = _feature_stack(cast_2, spec, view=2)

    bundle = PairBundle(
        image_1=_render_image(cast_1),
        image_2=_render_image(cast_2),
        depth_1=cast_1.depth.astype(np.float32),
        depth_2=cast_2.depth.astype(np.float32),
        intrinsics_1=spec.cam1.K.astype(np.float32),
        intrinsics_2=spec.cam2.K.astype(np.float32),
        extrinsics_1=spec.cam1.T.astype(np.float32),
        extrinsics_2=spec.cam2.T.astype(np.float32),
        features_1=keys_1,
        features_2=keys_2,
        embed_1=embed_1,
        embed_2=embed_2,
        seg_masks_1=_seg_masks(cast_1),
        seg_masks_2=_seg_masks(cast_2),
        meta={"source": "synthetic", "seed": str(spec.seed)},
    )

    overlap_1 = oracle_overlap(bundle, view=1)
    overlap_2 = oracle_overlap(bundle, view=2)
    change_full_1 = cast_1.code != cast_1_post.code
    change_full_2 = cast_2_pre.code != cast_2.code
    gt = GroundTruth(
        change_1=change_full_1 & overlap_1,
        change_2=change_full_2 & overlap_2,
        change_full_1=change_full_1,
        change_full_2=change_full_2,
        occlusion_1=oracle_occlusion(bundle, world_post, view=1),
        occlusion_2=oracle_occlusion(bundle, world_pre, view=2),
        overlap_1=overlap_1,
        overlap_2=overlap_2,
        world_pre=world_pre,
        world_post=world_post,
        cam1=spec.cam1,
        cam2=spec.cam2,
    )
    bundle.gt_mask = gt.change_1
    bundle.validate()
    return bundle, gt


# ---------------------------------------------------------------------------
# camera and scene construction helpers


def look_at_camera(eye, target, fx: float, fy: float, width: int, height: int,
                   cx: Optional[float] = None, cy: Optional[float] = None) -> Camera:
    """World->camera pose for a camera at `eye` looking at `target`.

    Uses the usual vision convention: x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    z = forward / norm
    up_world = np.array([0.0, -1.0, 0.0])
    x = np.cross(z, up_world)
    if np.linalg.norm(x) < 1e-9:  # looking straight up/down
        x = np.array([1.0, 0.0, 0.0])
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = -R @ eye
    K = np.array([[fx, 0.0, (width - 1) / 2 if cx is None else cx],
                  [0.0, fy, (height - 1) / 2 if cy is None else cy],
                  [0.0, 0.0, 1.0]])
    return Camera(K=K, T=T, width=width, height=height)


def _rotation_about_axis(axis, deg: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    a = np.deg2rad(deg)
    kx, ky, kz = axis
    K = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * (K @ K)


def plane_box_spec(seed: int, resolution: Tuple[int, int] = (96, 96),
                   max_rot_deg: float = 30.0, max_trans_frac: float = 0.2,
                   change: Optional[str] = "recolor",
                   plane_depth: float = 5.0) -> SceneSpec:
    """Randomized backdrop-plane-plus-box scene used throughout the tests.

    Camera 2 is rotated by up to `max_rot_deg` about a random axis and
    translated by up to `max_trans_frac` of the plane depth. `change` is
    one of recolor/insert/remove/None.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2024]))
    h, w = resolution
    z0 = plane_depth
    wall_half = 3.0 * z0
    fx = float(rng.uniform(1.05, 1.3)) * min(h, w)
    cx = (w - 1) / 2 + float(rng.uniform(-0.5, 0.5))
    cy = (h - 1) / 2 + float(rng.uniform(-0.5, 0.5))

    box_c = rng.uniform(-0.22 * z0, 0.22 * z0, size=2)
    box_half = rng.uniform(0.07 * z0, 0.12 * z0, size=2)
    box_h = float(rng.uniform(0.16, 0.3)) * z0
    surfaces = [
        Box(lo=(float(box_c[0] - box_half[0]), float(box_c[1] - box_half[1]), z0 - box_h),
            hi=(float(box_c[0] + box_half[0]), float(box_c[1] + box_half[1]), z0),
            albedo=(205, 170, 60), surface_id="crate"),
        Rect(axis=2, offset=z0, bounds=((-wall_half, wall_half), (-wall_half, wall_half)),
             albedo=(95, 120, 160), surface_id="wall"),
    ]

    changes: List[object] = []
    # change regions sized so their pixel footprint dwarfs the ~1 px of
    # warp resampling jitter, and placed to stay inside the overlap
    if change == "recolor":
        c = rng.uniform(-0.18 * z0, 0.18 * z0, size=2)
        half = rng.uniform(0.13 * z0, 0.2 * z0, size=2)
        region = ((float(c[0] - half[0]), float(c[0] + half[0])),
                  (float(c[1] - half[1]), float(c[1] + half[1])))
        changes = [Recolor(target="wall", albedo=(210, 60, 60), region=region)]
    elif change == "insert":
        c = rng.uniform(-0.18 * z0, 0.18 * z0, size=2)
        half = rng.uniform(0.13 * z0, 0.2 * z0, size=2)
        changes = [Insert(Rect(
            axis=2, offset=z0 - 0.004 * z0,
            bounds=((float(c[0] - half[0]), float(c[0] + half[0])),
                    (float(c[1] - half[1]), float(c[1] + half[1]))),
            albedo=(60, 200, 90), surface_id="poster"))]
    elif change == "remove":
        changes = [Remove(target="crate")]
    elif change is not None:
        raise ValueError(f"unknown change kind {change!r}")

    cam1 = look_at_camera((0.0, 0.0, 0.0), (0.0, 0.0, z0), fx, fx, w, h, cx, cy)

    trans_dir = rng.normal(size=3)
    trans_dir /= np.linalg.norm(trans_dir)
    eye2 = trans_dir * float(rng.uniform(0.25, 1.0)) * max_trans_frac * z0
    cam2_base = look_at_camera(eye2, (0.0, 0.0, z0), fx, fx, w, h, cx, cy)
    # extra rotation about a random axis on top of the look-at orientation
    look_angle = np.rad2deg(np.arccos(np.clip(
        (np.trace(cam2_base.T[:3, :3] @ cam1.T[:3, :3].T) - 1) / 2, -1, 1)))
    spare = max(max_rot_deg - look_angle, 0.0)
    extra_deg = float(rng.uniform(0.2, 0.95)) * spare
    axis = rng.normal(size=3)
    R2 = _rotation_about_axis(axis, extra_deg) @ cam2_base.T[:3, :3]
    T2 = np.eye(4)
    T2[:3, :3] = R2
    T2[:3, 3] = -R2 @ eye2
    cam2 = Camera(K=cam2_base.K, T=T2, width=w, height=h)

    return SceneSpec(surfaces=surfaces, cam1=cam1, cam2=cam2, changes=changes,
                     seed=seed, resolution=resolution)


# ---------------------------------------------------------------------------
# JSON scene specs for the command line


def _surface_from_json(d: dict) -> object:
    kind = d.get("kind")
    if kind == "rect":
        return Rect(axis=_AXES[d["axis"]], offset=float(d["offset"]),
                    bounds=tuple((float(lo), float(hi)) for lo, hi in d["bounds"]),
                    albedo=tuple(int(c) for c in d["albedo"]),
                    surface_id=str(d["id"]))
    if kind == "box":
        return Box(lo=tuple(float(x) for x in d["lo"]),
                   hi=tuple(float(x) for x in d["hi"]),
                   albedo=tuple(int(c) for c in d["albedo"]),
                   surface_id=str(d["id"]))
    raise ValueError(f"unknown surface kind {kind!r}")


def _change_from_json(d: dict) -> object:
    op = d.get("op")
    if op == "insert":
        return Insert(surface=_surface_from_json(d["surface"]))
    if op == "remove":
        return Remove(target=str(d["target"]))
    if op == "recolor":
        region = d.get("region")
        if region is not None:
            region = tuple((float(lo), float(hi)) for lo, hi in region)
        return Recolor(target=str(d["target"]),
                       albedo=tuple(int(c) for c in d["albedo"]), region=region)
    raise ValueError(f"unknown change op {op!r}")


def _camera_from_json(d: dict, width: int, height: int) -> Camera:
    if "K" in d and "T" in d:
        return Camera(K=np.asarray(d["K"], dtype=np.float64),
                      T=np.asarray(d["T"], dtype=np.float64),
                      width=width, height=height)
    return look_at_camera(d["eye"], d["look_at"], float(d["fx"]),
                          float(d.get("fy", d["fx"])), width, height,
                          cx=d.get("cx"), cy=d.get("cy"))


def scene_spec_from_json(text: str) -> SceneSpec:
    """Parse a JSON scene description into a :class:`SceneSpec`."""
    d = json.loads(text)
    h, w = (int(x) for x in d["resolution"])
    feats = d.get("features", {})
    return SceneSpec(
        surfaces=[_surface_from_json(s) for s in d["surfaces"]],
        cam1=_camera_from_json(d["cam1"], w, h),
        cam2=_camera_from_json(d["cam2"], w, h),
        changes=[_change_from_json(c) for c in d.get("changes", [])],
        seed=int(d.get("seed", 0)),
        resolution=(h, w),
        heads=int(feats.get("heads", 4)),
        key_dim=int(feats.get("key_dim", 32)),
        embed_dim=int(feats.get("embed_dim", 64)),
        noise_deg=float(feats.get("noise_deg", 5.0)),
    )
