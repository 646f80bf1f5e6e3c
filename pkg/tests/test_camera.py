"""Pinhole camera model: unprojection, projection, coord maps, recovery.

Expected values are hand-computed from the conventions:
    coord(u, v) = ((u - cx)/fx, (v - cy)/fy)
    unproject((x, y), d) = (x d, y d, d)
    project((x, y, z))  = (fx x/z + cx, fy y/z + cy)
"""

import numpy as np
import pytest

from reconkit.camera import (
    CoordMap,
    DegenerateCoordMapError,
    DepthMap,
    Intrinsics,
    coords_from_intrinsics,
    intrinsics_from_coords,
    project,
    unproject,
)


def test_unproject_single_coord():
    coords = CoordMap(np.array([[[0.5, -0.25]]]))
    depth = DepthMap.from_values(np.array([[2.0]]))
    pm = unproject(coords, depth)
    np.testing.assert_array_equal(pm.values[0, 0], [1.0, -0.5, 2.0])
    assert pm.valid[0, 0]


def test_unproject_optical_axis():
    pm = unproject(CoordMap(np.zeros((1, 1, 2))), DepthMap.from_values(np.ones((1, 1))))
    np.testing.assert_array_equal(pm.values[0, 0], [0.0, 0.0, 1.0])


def test_unproject_full_map_from_intrinsics(vga_intrinsics):
    coords = coords_from_intrinsics(vga_intrinsics)
    depth = DepthMap.from_values(np.full((480, 640), 1.5))
    pm = unproject(coords, depth)
    np.testing.assert_allclose(pm.values[240, 320], [0.0, 0.0, 1.5], atol=1e-15)
    assert pm.valid.all()


def test_unproject_dimension_mismatch(vga_intrinsics):
    coords = coords_from_intrinsics(vga_intrinsics)
    with pytest.raises(ValueError, match="shape"):
        unproject(coords, DepthMap.from_values(np.ones((10, 10))))


def test_invalid_depth_marks_pixels_invalid():
    values = np.array([[1.0, 0.0], [-2.0, np.nan]])
    depth = DepthMap.from_values(values)
    assert depth.valid[0, 0]
    assert not depth.valid[0, 1]
    assert not depth.valid[1, 0]
    assert not depth.valid[1, 1]
    pm = unproject(CoordMap(np.zeros((2, 2, 2))), depth)
    np.testing.assert_array_equal(pm.valid, depth.valid)


def test_coords_principal_point(vga_intrinsics):
    coords = coords_from_intrinsics(vga_intrinsics)
    np.testing.assert_array_equal(coords.values[240, 320], [0.0, 0.0])


def test_coords_one_focal_length_right():
    k = Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=900, height=480)
    coords = coords_from_intrinsics(k)
    np.testing.assert_allclose(coords.values[240, 820], [1.0, 0.0], atol=1e-15)


def test_coords_substitution():
    k = Intrinsics(fx=600.0, fy=400.0, cx=1e-9, cy=1e-9, width=100, height=100)
    coords = coords_from_intrinsics(k)
    np.testing.assert_allclose(coords.values[40, 60], [0.1, 0.1], atol=1e-12)


def test_project_on_axis(vga_intrinsics):
    np.testing.assert_array_equal(project([0.0, 0.0, 2.0], vga_intrinsics), [320.0, 240.0])


def test_project_substitution(vga_intrinsics):
    np.testing.assert_allclose(
        project([1.0, -0.5, 2.0], vga_intrinsics), [570.0, 115.0], atol=1e-12
    )


def test_project_rejects_nonpositive_depth(vga_intrinsics):
    with pytest.raises(ValueError, match="depth"):
        project([0.0, 0.0, -1.0], vga_intrinsics)
    with pytest.raises(ValueError, match="depth"):
        project([0.0, 0.0, 0.0], vga_intrinsics)


def test_project_unproject_round_trip(vga_intrinsics, rng):
    coords = coords_from_intrinsics(vga_intrinsics)
    us = rng.integers(0, 640, size=1000)
    vs = rng.integers(0, 480, size=1000)
    ds = rng.uniform(0.2, 5.0, size=1000)
    pts = np.stack(
        [coords.values[vs, us, 0] * ds, coords.values[vs, us, 1] * ds, ds], axis=1
    )
    uv = project(pts, vga_intrinsics)
    np.testing.assert_allclose(uv[:, 0], us, atol=1e-9)
    np.testing.assert_allclose(uv[:, 1], vs, atol=1e-9)


def test_perspective_division_reproduces_coords(vga_intrinsics, rng):
    coords = coords_from_intrinsics(vga_intrinsics)
    depth = DepthMap.from_values(rng.uniform(0.5, 3.0, size=(480, 640)))
    pm = unproject(coords, depth)
    x_over_z = pm.values[:, :, 0] / pm.values[:, :, 2]
    y_over_z = pm.values[:, :, 1] / pm.values[:, :, 2]
    # (x * d) / d re-rounds twice; equality holds to a couple of ulp
    np.testing.assert_allclose(x_over_z, coords.values[:, :, 0], rtol=0, atol=5e-16)
    np.testing.assert_allclose(y_over_z, coords.values[:, :, 1], rtol=0, atol=5e-16)


def test_unprojection_depth_homogeneity(vga_intrinsics, rng):
    coords = coords_from_intrinsics(vga_intrinsics)
    base = rng.uniform(0.5, 3.0, size=(480, 640))
    lam = 3.7
    pm1 = unproject(coords, DepthMap.from_values(base))
    pm2 = unproject(coords, DepthMap.from_values(lam * base))
    np.testing.assert_allclose(pm2.values, lam * pm1.values, rtol=1e-12)


def test_intrinsics_recovery_exact(vga_intrinsics):
    coords = coords_from_intrinsics(vga_intrinsics)
    k = intrinsics_from_coords(coords)
    assert abs(k.fx - 500.0) < 1e-9
    assert abs(k.fy - 500.0) < 1e-9
    assert abs(k.cx - 320.0) < 1e-9
    assert abs(k.cy - 240.0) < 1e-9
    assert (k.width, k.height) == (640, 480)


def test_intrinsics_recovery_under_noise(vga_intrinsics, rng):
    coords = coords_from_intrinsics(vga_intrinsics)
    noisy = CoordMap(coords.values + rng.uniform(-1e-3, 1e-3, coords.values.shape))
    k = intrinsics_from_coords(noisy)
    assert abs(k.fx - 500.0) / 500.0 < 0.01
    assert abs(k.fy - 500.0) / 500.0 < 0.01


def test_intrinsics_recovery_degenerate():
    with pytest.raises(DegenerateCoordMapError):
        intrinsics_from_coords(CoordMap(np.full((10, 10, 2), 0.3)))


def test_intrinsics_invariants():
    with pytest.raises(ValueError):
        Intrinsics(fx=-1.0, fy=1.0, cx=1.0, cy=1.0, width=10, height=10)
    with pytest.raises(ValueError):
        Intrinsics(fx=10.0, fy=10.0, cx=20.0, cy=5.0, width=10, height=10)
