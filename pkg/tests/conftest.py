import numpy as np
import pytest

from reconkit.camera import Intrinsics
from reconkit.oracle.bundle import generate_scene, random_scene_spec
from reconkit.transforms import RigidTransform, rotation_about_axis


def random_rotation(rng) -> np.ndarray:
    return rotation_about_axis(rng.standard_normal(3), rng.uniform(0, np.pi))


def random_rigid(rng, t_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), t_scale * rng.standard_normal(3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def vga_intrinsics():
    return Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture(scope="session")
def small_bundle():
    """One deterministic binocular 160x120 oracle scene."""
    spec = random_scene_spec(seed=42, views=2, width=160, height=120)
    return generate_scene(spec, seed=42)


@pytest.fixture(scope="session")
def small_bundles():
    """Five deterministic binocular 96x72 oracle scenes."""
    out = []
    for seed in range(5):
        spec = random_scene_spec(seed=seed, views=2, width=96, height=72)
        out.append(generate_scene(spec, seed=seed))
    return out
