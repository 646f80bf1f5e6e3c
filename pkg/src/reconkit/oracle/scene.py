"""Procedural desk-scale scenes rendered by analytic ray casting.

A scene is a table plane at z = 0 (background), a few spheres/boxes resting
on it (objects), and a serial-arm proxy rendered as capsules around its
links (robot).  The robot base sits at the world origin with z up, so the
world frame doubles as the canonical robot frame.

Cameras are sampled on a spherical shell around the workspace center
(randomized radius, azimuth, elevation), oriented by a look-at constraint
toward a jittered target with an extra random roll, and carry intrinsics
perturbed around defaults.  Rays are cast through pixel centers with
camera-frame direction (x, y, 1), so the hit parameter equals the z-depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..camera import CoordMap, DepthMap, Intrinsics, coords_from_intrinsics
from ..kinematics import KinematicChain, KeypointSpec, forward_kinematics
from ..masks import LABEL_BACKGROUND, LABEL_OBJECT, LABEL_ROBOT
from ..transforms import RigidTransform, rotation_about_axis

RAY_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True, eq=False)
class Box:
    pose: RigidTransform
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(he <= 0):
            raise ValueError("box half extents must be positive")
        object.__setattr__(self, "half_extents", he)


@dataclass(frozen=True, eq=False)
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float).reshape(3))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True, eq=False)
class Table:
    """Finite rectangle in the z = 0 plane of its local frame."""

    pose: RigidTransform
    half_extents: np.ndarray  # (ex, ey)

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float).reshape(2)
        if np.any(he <= 0):
            raise ValueError("table half extents must be positive")
        object.__setattr__(self, "half_extents", he)


@dataclass(frozen=True)
class CameraRanges:
    """Randomization ranges for the spherical-shell camera sampler."""

    radius: tuple[float, float] = (0.8, 1.6)
    elevation_deg: tuple[float, float] = (20.0, 70.0)
    azimuth_deg: tuple[float, float] = (0.0, 360.0)
    roll_deg: tuple[float, float] = (-15.0, 15.0)
    target_jitter: float = 0.05
    focal_jitter: float = 0.05
    center_jitter: float = 0.02


@dataclass(frozen=True, eq=False)
class SceneSpec:
    table: Table
    primitives: tuple
    chain: KinematicChain
    keypoints: KeypointSpec
    joint_state: np.ndarray
    views: int = 2
    width: int = 630
    height: int = 476
    capsule_radius: float = 0.045
    heatmap_sigma: float = 3.0
    camera: CameraRanges = field(default_factory=CameraRanges)
    workspace_center: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.0, 0.15]))

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(
            self, "joint_state", np.asarray(self.joint_state, dtype=float).reshape(-1)
        )
        object.__setattr__(
            self,
            "workspace_center",
            np.asarray(self.workspace_center, dtype=float).reshape(3),
        )
        if self.views not in (1, 2):
            raise ValueError(f"views must be 1 or 2, got {self.views}")


def default_intrinsics(width: int, height: int) -> Intrinsics:
    # ~60 degree horizontal field of view
    f = 0.866 * width
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def sample_camera(
    center,
    rng: np.random.Generator,
    ranges: CameraRanges = CameraRanges(),
    width: int = 630,
    height: int = 476,
) -> tuple[Intrinsics, RigidTransform]:
    """Spherical-shell camera pose plus jittered pinhole intrinsics.

    Zero-width ranges produce the deterministic canonical camera.  The
    returned pose is camera-to-world.
    """
    center = np.asarray(center, dtype=float).reshape(3)
    radius = rng.uniform(*ranges.radius)
    azimuth = math.radians(rng.uniform(*ranges.azimuth_deg))
    elevation = math.radians(rng.uniform(*ranges.elevation_deg))
    eye = center + radius * np.array(
        [
            math.cos(elevation) * math.cos(azimuth),
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
        ]
    )
    target = center + rng.uniform(-ranges.target_jitter, ranges.target_jitter, 3)
    roll = math.radians(rng.uniform(*ranges.roll_deg))

    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-12:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=1)
    rot = rot @ rotation_about_axis(np.array([0.0, 0.0, 1.0]), roll)
    pose = RigidTransform(rot, eye)

    base = default_intrinsics(width, height)
    fj, cj = ranges.focal_jitter, ranges.center_jitter
    intr = Intrinsics(
        fx=base.fx * (1.0 + rng.uniform(-fj, fj)),
        fy=base.fy * (1.0 + rng.uniform(-fj, fj)),
        cx=base.cx + rng.uniform(-cj, cj) * width,
        cy=base.cy + rng.uniform(-cj, cj) * height,
        width=width,
        height=height,
    )
    return intr, pose


# ---------------------------------------------------------------------------
# Ray-primitive intersections.  Rays are origin + t * dir with unnormalized
# dir; each routine returns per-pixel hit parameters (inf on miss).
# ---------------------------------------------------------------------------


def _intersect_table(table: Table, origin, dirs) -> np.ndarray:
    inv = table.pose.inverse()
    o = inv.apply(origin)
    d = dirs @ inv.rotation.T
    dz = d[..., 2]
    t = np.full(dirs.shape[:-1], np.inf)
    hit = np.abs(dz) > 1e-15
    t_hit = np.where(hit, -o[2] / np.where(hit, dz, 1.0), 0.0)
    px = o[0] + t_hit * d[..., 0]
    py = o[1] + t_hit * d[..., 1]
    ok = (
        hit
        & (t_hit > RAY_EPS)
        & (np.abs(px) <= table.half_extents[0])
        & (np.abs(py) <= table.half_extents[1])
    )
    t[ok] = t_hit[ok]
    return t


def _intersect_sphere(sphere: Sphere, origin, dirs) -> np.ndarray:
    oc = origin - sphere.center
    a = np.sum(dirs * dirs, axis=-1)
    b = 2.0 * (dirs @ oc)
    c = oc @ oc - sphere.radius**2
    disc = b * b - 4.0 * a * c
    t = np.full(dirs.shape[:-1], np.inf)
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    near = np.where(t1 > RAY_EPS, t1, np.where(t2 > RAY_EPS, t2, np.inf))
    t[hit] = near[hit]
    return t


def _intersect_box(box: Box, origin, dirs) -> np.ndarray:
    inv = box.pose.inverse()
    o = inv.apply(origin)
    d = dirs @ inv.rotation.T
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_d = 1.0 / d
        t_lo = (-box.half_extents - o) * inv_d
        t_hi = (box.half_extents - o) * inv_d
    near = np.nanmax(np.minimum(t_lo, t_hi), axis=-1)
    far = np.nanmin(np.maximum(t_lo, t_hi), axis=-1)
    # axis-parallel rays miss unless the origin lies inside the slab
    parallel_miss = np.any(
        (np.abs(d) < 1e-15) & ((o < -box.half_extents) | (o > box.half_extents)),
        axis=-1,
    )
    t = np.where(near > RAY_EPS, near, np.where(far > RAY_EPS, far, np.inf))
    t[(far < near) | (far <= RAY_EPS) | parallel_miss] = np.inf
    return t


def _intersect_capsule(cap: Capsule, origin, dirs) -> np.ndarray:
    axis = cap.p1 - cap.p0
    length = np.linalg.norm(axis)
    if length < 1e-12:
        return _intersect_sphere(Sphere(cap.p0, cap.radius), origin, dirs)
    u = axis / length
    oc = origin - cap.p0
    d_par = dirs @ u
    oc_par = oc @ u
    d_perp = dirs - d_par[..., None] * u
    oc_perp = oc - oc_par * u
    a = np.sum(d_perp * d_perp, axis=-1)
    b = 2.0 * (d_perp @ oc_perp)
    c = oc_perp @ oc_perp - cap.radius**2
    t = np.full(dirs.shape[:-1], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c
        ok = (disc >= 0) & (a > 1e-30)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for t_cand in ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)):
            s = oc_par + t_cand * d_par
            good = ok & (t_cand > RAY_EPS) & (s >= 0) & (s <= length)
            t = np.where(good & (t_cand < t), t_cand, t)
    for cap_center in (cap.p0, cap.p1):
        t_sph = _intersect_sphere(Sphere(cap_center, cap.radius), origin, dirs)
        t = np.minimum(t, t_sph)
    return t


def chain_capsules(spec: SceneSpec) -> list[Capsule]:
    poses = forward_kinematics(spec.chain, spec.joint_state)
    capsules = []
    for prev, cur in zip(poses[:-1], poses[1:]):
        if np.linalg.norm(cur.translation - prev.translation) > 1e-9:
            capsules.append(Capsule(prev.translation, cur.translation, spec.capsule_radius))
        else:
            capsules.append(Capsule(prev.translation, cur.translation + np.array([0, 0, 1e-9]), spec.capsule_radius))
    return capsules


def render(spec: SceneSpec, intrinsics: Intrinsics, pose: RigidTransform):
    """Ray-cast one view.

    Returns (depth: DepthMap, coords: CoordMap, labels: HxW uint8) where the
    label of a miss pixel is 0 and the depth there is invalid.
    """
    coords = coords_from_intrinsics(intrinsics)
    dirs_cam = np.concatenate(
        [coords.values, np.ones(coords.values.shape[:2] + (1,))], axis=-1
    )
    dirs_world = dirs_cam @ pose.rotation.T
    origin = pose.translation

    best_t = _intersect_table(spec.table, origin, dirs_world)
    labels = np.where(np.isfinite(best_t), LABEL_BACKGROUND, 0).astype(np.uint8)

    for prim in spec.primitives:
        if isinstance(prim, Sphere):
            t = _intersect_sphere(prim, origin, dirs_world)
        elif isinstance(prim, Box):
            t = _intersect_box(prim, origin, dirs_world)
        else:
            raise TypeError(f"unknown primitive {type(prim).__name__}")
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        labels[closer] = LABEL_OBJECT

    for cap in chain_capsules(spec):
        t = _intersect_capsule(cap, origin, dirs_world)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        labels[closer] = LABEL_ROBOT

    valid = np.isfinite(best_t)
    depth = DepthMap(np.where(valid, best_t, 0.0), valid)
    return depth, coords, labels
