import numpy as np
import pytest
from PIL import Image

from scenechange import generate_scene
from scenechange.synthetic import Rect, SceneSpec, look_at_camera


def planar_scene(seed=3, resolution=(192, 192), yaw_world=0.35, trans=(0.3, 0.05, 0.0)):
    """Textured wall pair with known cameras, for exercising the
    classical reconstruction path."""
    h, w = resolution
    wall = Rect(axis=2, offset=5.0, bounds=((-25, 25), (-25, 25)),
                albedo=(120, 135, 150), surface_id="wall")
    cam1 = look_at_camera((0, 0, 0), (0, 0, 5.0), 1.1 * w, 1.1 * w, w, h)
    cam2 = look_at_camera(trans, (yaw_world, 0, 5.0), 1.1 * w, 1.1 * w, w, h)
    spec = SceneSpec(surfaces=[wall], cam1=cam1, cam2=cam2, changes=[],
                     seed=seed, resolution=resolution)
    return generate_scene(spec)


@pytest.fixture(scope="session")
def planar_pair(tmp_path_factory):
    """PNG pair rendered from a known planar scene, plus ground truth."""
    bundle, gt = planar_scene()
    root = tmp_path_factory.mktemp("pair")
    p1, p2 = root / "view1.png", root / "view2.png"
    Image.fromarray(bundle.image_1).save(p1)
    Image.fromarray(bundle.image_2).save(p2)
    return p1, p2, bundle, gt


@pytest.fixture(scope="session")
def duplicated_pair(tmp_path_factory, planar_pair):
    p1 = planar_pair[0]
    root = tmp_path_factory.mktemp("dup")
    p2 = root / "same.png"
    Image.open(p1).save(p2)
    return p1, p2
