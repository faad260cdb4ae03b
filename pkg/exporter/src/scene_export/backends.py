"""Reconstruction and feature backends.

The deep backends wrap the pretrained geometry model and the promptable
segmenter; they need their packages and multi-gigabyte checkpoints
installed and fail with a clear error otherwise. The classical backend is
a dependency-light alternative built on feature matching, homography
decomposition, and filter-bank descriptors, so the exporter stays usable
on machines without the models.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter, laplace
from skimage import color as skcolor
from skimage.segmentation import felzenszwalb

from .formats import ExportError

MIN_MATCHES = 12
MIN_PARALLAX_PX = 1.0


@dataclass
class GeometryResult:
    depth_1: np.ndarray
    depth_2: np.ndarray
    intrinsics_1: np.ndarray
    intrinsics_2: np.ndarray
    pose_1: np.ndarray  # candidate world->camera; convention is verified later
    pose_2: np.ndarray
    notes: Dict[str, str] = field(default_factory=dict)


@dataclass
class FeatureResult:
    keys: np.ndarray            # heads x h' x w' x d
    embed: np.ndarray           # h' x w' x d_e
    seg_masks: List[np.ndarray]


def heuristic_intrinsics(height: int, width: int) -> np.ndarray:
    f = 1.2 * max(height, width)
    return np.array([[f, 0.0, (width - 1) / 2],
                     [0.0, f, (height - 1) / 2],
                     [0.0, 0.0, 1.0]])


class ClassicalGeometry:
    """Dominant-plane reconstruction from sparse feature matches.

    A homography between the views is decomposed into relative pose and
    plane; depth maps are the per-view depth of that plane. Pairs with
    too little parallax (or too few matches) degrade to an identity pose
    with a constant unit-depth plane, which is the geometry any
    zero-parallax pair is consistent with.
    """

    name = "classical"

    def __init__(self, n_features: int = 4000, fast_threshold: int = 10,
                 ransac_px: float = 2.0):
        self.n_features = n_features
        self.fast_threshold = fast_threshold
        self.ransac_px = ransac_px

    def reconstruct(self, img1: np.ndarray, img2: np.ndarray) -> GeometryResult:
        h, w = img1.shape[:2]
        K = heuristic_intrinsics(h, w)
        notes = {"intrinsics": "heuristic focal 1.2*max(H,W)"}

        pts1, pts2 = self._match(img1, img2)
        if pts1 is None:
            return self._flat_result(h, w, K, notes, "too few matches")
        displacement = float(np.median(np.linalg.norm(pts2 - pts1, axis=1)))
        if displacement < MIN_PARALLAX_PX:
            return self._flat_result(h, w, K, notes, "near-zero parallax")

        H_mat, inliers = cv2.findHomography(pts1, pts2, cv2.RANSAC, self.ransac_px)
        if H_mat is None or inliers is None or inliers.sum() < MIN_MATCHES:
            return self._flat_result(h, w, K, notes, "homography failed")
        sel = inliers.ravel().astype(bool)
        solution = self._pick_plane(H_mat, K, pts1[sel], pts2[sel])
        if solution is None:
            return self._flat_result(h, w, K, notes, "no physical decomposition")
        R, t, normal = solution

        depth_1 = self._plane_depth(K, np.eye(3), np.zeros(3), normal, 1.0, h, w)
        n2 = R @ normal
        d2 = 1.0 + float(n2 @ t)
        depth_2 = self._plane_depth(K, R, t, n2, d2, h, w)
        if depth_1 is None or depth_2 is None:
            return self._flat_result(h, w, K, notes, "plane behind a camera")

        pose_2 = np.eye(4)
        pose_2[:3, :3] = R
        pose_2[:3, 3] = t
        notes["geometry"] = (f"dominant plane from {int(inliers.sum())} "
                             f"homography inliers")
        return GeometryResult(depth_1=depth_1, depth_2=depth_2,
                              intrinsics_1=K, intrinsics_2=K.copy(),
                              pose_1=np.eye(4), pose_2=pose_2, notes=notes)

    def _match(self, img1, img2):
        orb = cv2.ORB_create(nfeatures=self.n_features,
                             fastThreshold=self.fast_threshold)
        gray1 = cv2.cvtColor(img1, cv2.COLOR_RGB2GRAY)
        gray2 = cv2.cvtColor(img2, cv2.COLOR_RGB2GRAY)
        kp1, des1 = orb.detectAndCompute(gray1, None)
        kp2, des2 = orb.detectAndCompute(gray2, None)
        if des1 is None or des2 is None or len(kp1) < MIN_MATCHES or len(kp2) < MIN_MATCHES:
            return None, None
        matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)
        matches = matcher.match(des1, des2)
        if len(matches) < MIN_MATCHES:
            return None, None
        pts1 = np.float32([kp1[m.queryIdx].pt for m in matches])
        pts2 = np.float32([kp2[m.trainIdx].pt for m in matches])
        return pts1, pts2

    def _pick_plane(self, H_mat, K, pts1, pts2):
        """Physically valid (R, t, n): plane in front of both cameras."""
        count, rotations, translations, normals = cv2.decomposeHomographyMat(H_mat, K)
        rays1 = np.concatenate([(pts1 - K[:2, 2]) / np.diag(K)[:2],
                                np.ones((len(pts1), 1))], axis=1)
        best = None
        for i in range(count):
            R = np.asarray(rotations[i], dtype=np.float64)
            t = np.asarray(translations[i], dtype=np.float64).ravel()
            n = np.asarray(normals[i], dtype=np.float64).ravel()
            depths1 = 1.0 / (rays1 @ n)
            if not (depths1 > 0).all():
                continue
            pts_cam2 = depths1[:, None] * rays1 @ R.T + t
            if not (pts_cam2[:, 2] > 0).all():
                continue
            score = float(n[2])  # prefer planes facing the first camera
            if best is None or score > best[0]:
                best = (score, R, t, n)
        if best is None:
            return None
        return best[1], best[2], best[3]

    @staticmethod
    def _plane_depth(K, R, t, normal, offset, h, w):
        u, v = np.meshgrid(np.arange(w, dtype=np.float64),
                           np.arange(h, dtype=np.float64))
        rays = np.stack([(u - K[0, 2]) / K[0, 0], (v - K[1, 2]) / K[1, 1],
                         np.ones_like(u)], axis=-1)
        denom = rays @ normal
        if not (denom > 1e-9).all():
            return None
        depth = offset / denom
        if not (depth > 0).all():
            return None
        return depth.astype(np.float32)

    @staticmethod
    def _flat_result(h, w, K, notes, reason):
        flat = np.ones((h, w), dtype=np.float32)
        merged = dict(notes)
        merged["geometry"] = f"degenerate: {reason}, identity pose"
        return GeometryResult(depth_1=flat, depth_2=flat.copy(),
                              intrinsics_1=K, intrinsics_2=K.copy(),
                              pose_1=np.eye(4), pose_2=np.eye(4),
                              notes=merged)


class ClassicalFeatures:
    """Filter-bank descriptors and graph-based segmentation masks.

    Two descriptor heads (color statistics, local texture) at half
    resolution, an embedding summarizing coarser appearance, and
    class-agnostic felzenszwalb regions at full resolution.
    """

    name = "classical"

    def __init__(self, max_masks: int = 48, min_mask_px: int = 64,
                 max_mask_frac: float = 0.9):
        self.max_masks = max_masks
        self.min_mask_px = min_mask_px
        self.max_mask_frac = max_mask_frac

    def extract(self, img: np.ndarray) -> FeatureResult:
        lab = skcolor.rgb2lab(img)
        h2, w2 = max(img.shape[0] // 2, 2), max(img.shape[1] // 2, 2)
        lab_small = cv2.resize(lab, (w2, h2), interpolation=cv2.INTER_AREA)
        gray = lab_small[..., 0]

        color_head = np.stack(
            [gaussian_filter(lab_small[..., c], sigma)
             for sigma in (1.0, 3.0) for c in range(3)], axis=-1)
        texture_head = np.stack(
            [np.abs(gaussian_filter(gray, sigma, order=order))
             for sigma in (1.0, 3.0) for order in ((0, 1), (1, 0))]
            + [np.abs(laplace(gaussian_filter(gray, sigma)))
               for sigma in (1.0, 3.0)], axis=-1)
        keys = np.stack([self._unit(color_head), self._unit(texture_head)])

        embed = np.concatenate(
            [np.stack([gaussian_filter(lab_small[..., c], 5.0) for c in range(3)], -1),
             np.stack([np.abs(gaussian_filter(gray, s, order=(0, 1)))
                       + np.abs(gaussian_filter(gray, s, order=(1, 0)))
                       for s in (2.0, 5.0)], -1),
             np.abs(laplace(gaussian_filter(gray, 5.0)))[..., None]], axis=-1)
        return FeatureResult(keys=keys.astype(np.float32),
                             embed=self._unit(embed).astype(np.float32),
                             seg_masks=self.segment(img))

    @staticmethod
    def _unit(stack: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(stack, axis=-1, keepdims=True)
        return stack / np.where(norm > 1e-9, norm, 1.0)

    def segment(self, img: np.ndarray) -> List[np.ndarray]:
        labels = felzenszwalb(img, scale=100, sigma=0.8,
                              min_size=self.min_mask_px)
        total = img.shape[0] * img.shape[1]
        masks = []
        for label in np.unique(labels):
            mask = labels == label
            area = int(mask.sum())
            if area < self.min_mask_px or area > self.max_mask_frac * total:
                continue
            masks.append((area, mask))
        masks.sort(key=lambda m: -m[0])
        return [m for _, m in masks[:self.max_masks]]


class DeepGeometry:
    """Wrapper for a pretrained multi-view geometry network.

    Requires the `vggt` package and its checkpoint; everything heavy is
    imported lazily so the rest of the exporter works without it.
    """

    name = "deep"

    def __init__(self, model_id: str = "facebook/VGGT-1B", device: str = "cpu"):
        self.model_id = model_id
        self.device = device

    def reconstruct(self, img1: np.ndarray, img2: np.ndarray) -> GeometryResult:
        try:
            import torch
            from vggt.models.vggt import VGGT
            from vggt.utils.load_fn import load_and_preprocess_images
            from vggt.utils.pose_enc import pose_encoding_to_extri_intri
        except ImportError as exc:
            raise ExportError(
                "geometry model unavailable: install the 'vggt' package and "
                f"its checkpoint to use the deep backend ({exc})") from exc

        import tempfile
        from PIL import Image

        model = VGGT.from_pretrained(self.model_id).to(self.device).eval()
        with tempfile.TemporaryDirectory() as tmp:
            paths = [f"{tmp}/0.png", f"{tmp}/1.png"]
            Image.fromarray(img1).save(paths[0])
            Image.fromarray(img2).save(paths[1])
            images = load_and_preprocess_images(paths).to(self.device)
        with torch.no_grad():
            out = model(images[None])
        extrinsic, intrinsic = pose_encoding_to_extri_intri(
            out["pose_enc"], images.shape[-2:])
        depth = out["depth"][0, :, :, :, 0].cpu().numpy()
        extrinsic = extrinsic[0].cpu().numpy()
        intrinsic = intrinsic[0].cpu().numpy()
        poses = []
        for i in range(2):
            T = np.eye(4)
            T[:3, :4] = extrinsic[i]
            poses.append(T)
        h, w = img1.shape[:2]
        d1 = cv2.resize(depth[0], (w, h), interpolation=cv2.INTER_NEAREST)
        d2 = cv2.resize(depth[1], (w, h), interpolation=cv2.INTER_NEAREST)
        scale = np.array([[w / depth.shape[2], 1, w / depth.shape[2]],
                          [1, h / depth.shape[1], h / depth.shape[1]],
                          [1, 1, 1]])
        return GeometryResult(
            depth_1=np.clip(d1, 0, None).astype(np.float32),
            depth_2=np.clip(d2, 0, None).astype(np.float32),
            intrinsics_1=intrinsic[0] * scale,
            intrinsics_2=intrinsic[1] * scale,
            pose_1=poses[0], pose_2=poses[1],
            notes={"geometry": f"deep backend {self.model_id}",
                   "intrinsics": "model prediction rescaled to image size"})


class DeepFeatures:
    """Promptable-segmenter wrapper: layer keys, final embedding, masks.

    Requires the `segment_anything` package plus a checkpoint file.
    """

    name = "deep"

    def __init__(self, checkpoint: str = "sam_vit_h_4b8939.pth",
                 model_type: str = "vit_h", layer: int = 17, device: str = "cpu"):
        self.checkpoint = checkpoint
        self.model_type = model_type
        self.layer = layer
        self.device = device

    def extract(self, img: np.ndarray) -> FeatureResult:
        try:
            import torch
            from segment_anything import (SamAutomaticMaskGenerator,
                                          sam_model_registry)
        except ImportError as exc:
            raise ExportError(
                "segmenter unavailable: install 'segment_anything' and its "
                f"checkpoint to use the deep backend ({exc})") from exc

        sam = sam_model_registry[self.model_type](checkpoint=self.checkpoint)
        sam.to(self.device).eval()
        captured = {}

        block = sam.image_encoder.blocks[self.layer]

        def keep_keys(_module, _inputs, _output):
            captured["qkv"] = _module.qkv_out if hasattr(_module, "qkv_out") else None

        def keep_qkv(module, inputs, output):
            # qkv projection output: B x H x W x 3*heads*dim
            captured["qkv"] = output.detach()

        hook = block.attn.qkv.register_forward_hook(keep_qkv)
        try:
            generator = SamAutomaticMaskGenerator(sam)
            records = generator.generate(img)
            encoder_input = generator.predictor.transform.apply_image(img)
            tensor = torch.as_tensor(encoder_input, device=self.device)
            tensor = tensor.permute(2, 0, 1)[None].float()
            with torch.no_grad():
                embedding = sam.image_encoder(sam.preprocess(tensor))
        finally:
            hook.remove()

        heads = block.attn.num_heads
        qkv = captured["qkv"][0]  # H' x W' x 3*heads*dim
        hp, wp, triple = qkv.shape
        dim = triple // (3 * heads)
        keys = qkv.reshape(hp, wp, 3, heads, dim)[:, :, 1]
        keys = keys.permute(2, 0, 1, 3).cpu().numpy().astype(np.float32)
        embed = embedding[0].permute(1, 2, 0).cpu().numpy().astype(np.float32)
        masks = [r["segmentation"].astype(bool) for r in records]
        return FeatureResult(keys=keys, embed=embed, seg_masks=masks)


def geometry_backend(name: str):
    if name == "classical":
        return ClassicalGeometry()
    if name == "deep":
        return DeepGeometry()
    raise ExportError(f"unknown geometry backend {name!r}")


def feature_backend(name: str, layer: int):
    if name == "classical":
        return ClassicalFeatures()
    if name == "deep":
        return DeepFeatures(layer=layer)
    raise ExportError(f"unknown feature backend {name!r}")
