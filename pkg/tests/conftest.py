import numpy as np
import pytest

from scenechange import Camera, PairBundle


def identity_camera(height=48, width=64, fx=100.0, fy=100.0):
    K = np.array([[fx, 0.0, (width - 1) / 2],
                  [0.0, fy, (height - 1) / 2],
                  [0.0, 0.0, 1.0]])
    return Camera(K=K, T=np.eye(4), width=width, height=height)


def translated_camera(t, height=48, width=64, fx=100.0, fy=100.0):
    """Camera sharing orientation with the identity camera, moved by t."""
    T = np.eye(4)
    T[:3, 3] = -np.asarray(t, dtype=np.float64)  # world->camera translation
    cam = identity_camera(height, width, fx, fy)
    return Camera(K=cam.K, T=T, width=width, height=height)


def minimal_bundle(height=8, width=10, rng=None):
    """Smallest valid bundle with every optional field populated."""
    rng = rng or np.random.default_rng(0)
    K = np.array([[50, 0, (width - 1) / 2],
                  [0, 50, (height - 1) / 2],
                  [0, 0, 1]], dtype=np.float32)
    seg = np.zeros((height, width), dtype=bool)
    seg[2:5, 3:7] = True
    return PairBundle(
        image_1=rng.integers(0, 255, (height, width, 3), dtype=np.uint8),
        image_2=rng.integers(0, 255, (height, width, 3), dtype=np.uint8),
        depth_1=np.full((height, width), 4.0, dtype=np.float32),
        depth_2=np.full((height, width), 4.0, dtype=np.float32),
        intrinsics_1=K,
        intrinsics_2=K,
        extrinsics_1=np.eye(4, dtype=np.float32),
        extrinsics_2=np.eye(4, dtype=np.float32),
        features_1=rng.normal(size=(2, height, width, 6)).astype(np.float32),
        features_2=rng.normal(size=(2, height, width, 6)).astype(np.float32),
        embed_1=rng.normal(size=(height, width, 5)).astype(np.float32),
        embed_2=rng.normal(size=(height, width, 5)).astype(np.float32),
        seg_masks_1=[seg],
        seg_masks_2=[seg.copy()],
        gt_mask=seg.copy(),
        meta={"source": "test"},
    ).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
