"""Keypoint decoding and Perspective-n-Point camera extrinsic estimation.

solve_pnp recovers the robot-base -> camera transform from >= 4 keypoint
correspondences: a linear initialization (12-parameter DLT for >= 6 points,
best-fit-plane homography otherwise or when the points are coplanar)
followed by Gauss-Newton on an SE(3) parameterization with step-halving.
The Gauss-Newton objective is the sum of squared reprojection errors; an
accepted step never increases it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, project
from .transforms import (
    RigidTransform,
    Similarity,
    orthogonalize_9d,
    rotation_about_axis,
    skew,
)

DEFAULT_TEMPERATURE = 1.0
MAX_ITERATIONS = 100
STEP_TOLERANCE = 1e-10


class DegenerateConfigurationError(ValueError):
    """Raised for point sets PnP cannot handle (too few, collinear)."""


class NonConvergenceError(RuntimeError):
    """Raised when Gauss-Newton fails to converge within the iteration cap."""


def soft_argmax(heatmap, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Sub-pixel keypoints as the expectation of pixel positions per channel.

    Each H x W x N channel is divided by its max (making the decoding
    invariant to positive per-channel scaling), then softmax((h/max - 1)/T)
    weights the pixel grid.  Returns (N, 2) coordinates as (x, y) = (col, row).
    """
    hm = np.asarray(heatmap, dtype=float)
    if hm.ndim == 2:
        hm = hm[:, :, None]
    if hm.ndim != 3:
        raise ValueError(f"heatmap must be HxWxN, got shape {hm.shape}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if np.any(hm < 0) or not np.all(np.isfinite(hm)):
        raise ValueError("heatmap entries must be finite and >= 0")
    h, w, n = hm.shape
    us = np.arange(w, dtype=float)
    vs = np.arange(h, dtype=float)
    out = np.empty((n, 2))
    for c in range(n):
        ch = hm[:, :, c]
        peak = ch.max()
        if peak == 0.0:
            raise ValueError(f"heatmap channel {c} is all-zero")
        weights = np.exp((ch / peak - 1.0) / temperature)
        total = weights.sum()
        out[c, 0] = (weights.sum(axis=0) @ us) / total
        out[c, 1] = (weights.sum(axis=1) @ vs) / total
    return out


def reprojection_error(points3d, pixels, k: Intrinsics, extrinsic: RigidTransform) -> float:
    """Mean Euclidean pixel distance between projected points and observations."""
    pts = np.asarray(points3d, dtype=float).reshape(-1, 3)
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if pts.shape[0] != px.shape[0]:
        raise ValueError(f"{pts.shape[0]} points vs {px.shape[0]} pixels")
    cam = extrinsic.apply(pts)
    if np.any(cam[:, 2] <= 0):
        raise ValueError("point behind camera")
    proj = project(cam, k)
    return float(np.mean(np.linalg.norm(proj - px, axis=1)))


@dataclass(frozen=True)
class PnPResult:
    extrinsic: RigidTransform
    reprojection_error: float
    iterations: int


def _normalized_obs(pixels, k: Intrinsics) -> np.ndarray:
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    m = np.empty_like(px)
    m[:, 0] = (px[:, 0] - k.cx) / k.fx
    m[:, 1] = (px[:, 1] - k.cy) / k.fy
    return m


def _init_dlt(pts: np.ndarray, obs: np.ndarray) -> RigidTransform:
    """12-parameter DLT on normalized observations; needs >= 6 points."""
    n = pts.shape[0]
    a = np.zeros((2 * n, 12))
    xh = np.hstack([pts, np.ones((n, 1))])
    a[0::2, 4:8] = -xh
    a[0::2, 8:12] = obs[:, 1:2] * xh
    a[1::2, 0:4] = xh
    a[1::2, 8:12] = -obs[:, 0:1] * xh
    _, _, vt = np.linalg.svd(a)
    p = vt[-1].reshape(3, 4)
    if np.linalg.det(p[:, :3]) < 0:
        p = -p
    m = p[:, :3]
    det = np.linalg.det(m)
    scale = det ** (1.0 / 3.0)
    if scale <= 0 or not np.isfinite(scale):
        raise DegenerateConfigurationError("DLT produced a singular projection")
    # det(M) > 0 already picks the cheirality-consistent sign of the null vector
    return RigidTransform(orthogonalize_9d(m / scale), p[:, 3] / scale)


def _init_homography(pts: np.ndarray, obs: np.ndarray) -> RigidTransform:
    """Pose from the homography of the (best-fit) plane through the points."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, _, vt = np.linalg.svd(centered)
    u_ax, v_ax = vt[0], vt[1]
    plane = np.stack([centered @ u_ax, centered @ v_ax], axis=1)

    n = pts.shape[0]
    a = np.zeros((2 * n, 9))
    ph = np.hstack([plane, np.ones((n, 1))])
    a[0::2, 3:6] = -ph
    a[0::2, 6:9] = obs[:, 1:2] * ph
    a[1::2, 0:3] = ph
    a[1::2, 6:9] = -obs[:, 0:1] * ph
    _, _, vt_h = np.linalg.svd(a)
    hmat = vt_h[-1].reshape(3, 3)

    def decompose(h):
        s = 0.5 * (np.linalg.norm(h[:, 0]) + np.linalg.norm(h[:, 1]))
        c1 = h[:, 0] / s
        c2 = h[:, 1] / s
        basis = np.stack([u_ax, v_ax, np.cross(u_ax, v_ax)], axis=1)
        r = orthogonalize_9d(np.stack([c1, c2, np.cross(c1, c2)], axis=1) @ basis.T)
        t = h[:, 2] / s - r @ centroid
        return RigidTransform(r, t)

    a_pose = decompose(hmat)
    b_pose = decompose(-hmat)
    a_front = np.min(a_pose.apply(pts)[:, 2])
    b_front = np.min(b_pose.apply(pts)[:, 2])
    return a_pose if a_front >= b_front else b_pose


def _cube_rotations():
    """The 24 axis-aligned orientations (signed permutations with det +1)."""
    out = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        base = np.zeros((3, 3))
        for row, col in enumerate(perm):
            base[row, col] = 1.0
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                for sz in (1.0, -1.0):
                    r = base * np.array([sx, sy, sz])[:, None]
                    if np.linalg.det(r) > 0:
                        out.append(r)
    return out


_CUBE_ROTATIONS = _cube_rotations()


def _fallback_inits(pts: np.ndarray):
    """Feasible look-at seeds: every cube orientation, centroid in front."""
    centroid = pts.mean(axis=0)
    spread = np.max(np.linalg.norm(pts - centroid, axis=1))
    d = max(4.0 * spread, 0.5)
    for r in _CUBE_ROTATIONS:
        yield RigidTransform(r, np.array([0.0, 0.0, d]) - r @ centroid)


def _gauss_newton(pts, px, k: Intrinsics, pose: RigidTransform, trace=None):
    def residuals(p: RigidTransform):
        cam = p.apply(pts)
        if np.any(cam[:, 2] <= 1e-12):
            return None, None
        proj = project(cam, k)
        return (proj - px).ravel(), cam

    res, cam = residuals(pose)
    if res is None:
        raise NonConvergenceError("initialization places points behind the camera")
    sse = res @ res
    if trace is not None:
        trace.append(float(sse))

    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        n = pts.shape[0]
        jac = np.zeros((2 * n, 6))
        x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
        # d(u,v)/d(p_cam) rows, chained with left perturbation
        # p_cam' = p_cam + dt + omega x p_cam
        du = np.stack([k.fx / z, np.zeros(n), -k.fx * x / z**2], axis=1)
        dv = np.stack([np.zeros(n), k.fy / z, -k.fy * y / z**2], axis=1)
        for i in range(n):
            cross = -skew(cam[i])
            jac[2 * i, 0:3] = du[i]
            jac[2 * i, 3:6] = du[i] @ cross
            jac[2 * i + 1, 0:3] = dv[i]
            jac[2 * i + 1, 3:6] = dv[i] @ cross
        try:
            step = np.linalg.solve(jac.T @ jac, -jac.T @ res)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        step_norm = np.linalg.norm(step)
        if step_norm < STEP_TOLERANCE:
            break

        # step-halving line search: never accept an increase of the objective
        accepted = False
        scale = 1.0
        for _ in range(30):
            dt = scale * step[0:3]
            omega = scale * step[3:6]
            angle = np.linalg.norm(omega)
            d_rot = rotation_about_axis(omega, angle) if angle > 0 else np.eye(3)
            candidate = RigidTransform(
                d_rot @ pose.rotation, d_rot @ pose.translation + dt
            )
            cres, ccam = residuals(candidate)
            if cres is not None:
                csse = cres @ cres
                if csse <= sse:
                    pose, res, cam, sse = candidate, cres, ccam, csse
                    if trace is not None:
                        trace.append(float(sse))
                    accepted = True
                    break
            scale *= 0.5
        if not accepted or scale * step_norm < STEP_TOLERANCE:
            break
    else:
        raise NonConvergenceError(f"no convergence after {MAX_ITERATIONS} iterations")

    mean_err = float(np.mean(np.linalg.norm(res.reshape(-1, 2), axis=1)))
    return pose, mean_err, iterations


def solve_pnp(points3d, pixels, k: Intrinsics) -> PnPResult:
    """Estimate the robot-base -> camera extrinsic from 2D-3D correspondences.

    Minimizes the sum of squared reprojection errors via DLT (or homography)
    initialization plus Gauss-Newton refinement.
    """
    pts = np.asarray(points3d, dtype=float).reshape(-1, 3)
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if pts.shape[0] != px.shape[0]:
        raise ValueError(f"{pts.shape[0]} points vs {px.shape[0]} pixels")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(px))):
        raise ValueError("PnP inputs must be finite")
    n = pts.shape[0]
    if n < 4:
        raise DegenerateConfigurationError(f"PnP needs at least 4 points, got {n}")

    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[1] <= sv[0] * 1e-8:
        raise DegenerateConfigurationError("points are collinear")
    coplanar = sv[2] <= sv[0] * 1e-6

    obs = _normalized_obs(px, k)
    inits = []
    try:
        if coplanar or n < 6:
            inits.append(_init_homography(pts, obs))
        else:
            inits.append(_init_dlt(pts, obs))
    except (DegenerateConfigurationError, np.linalg.LinAlgError):
        pass
    # the plane homography only approximates non-coplanar point sets, so back
    # it up with deterministic look-at seeds; same when the linear init failed
    if not inits or (n < 6 and not coplanar):
        inits.extend(_fallback_inits(pts))

    best = None
    for init in inits:
        try:
            pose, err, iterations = _gauss_newton(pts, px, k, init)
        except NonConvergenceError:
            continue
        if best is None or err < best.reprojection_error:
            best = PnPResult(extrinsic=pose, reprojection_error=err, iterations=iterations)
        if best.reprojection_error < 1e-8:
            break
    if best is None:
        raise NonConvergenceError("no initialization led to a converged solution")
    return best


def refine_similarity(sim: Similarity, pnp_extrinsic: RigidTransform) -> Similarity:
    """Replace the rigid part with the inverted PnP extrinsic; scale is kept.

    The extrinsic maps robot base -> camera, so its inverse matches the
    canonicalization direction (camera frame -> robot base).
    """
    return Similarity(sim.scale, pnp_extrinsic.inverse())
