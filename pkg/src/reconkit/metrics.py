"""Benchmark metrics for point maps and camera poses, plus aggregation.

Translation errors are meters, rotation errors radians; a threshold value
like 0.03 means 0.03 m for translation and 0.03 rad for rotation.  Scale
error is relative: |s_pred - s_gt| / s_gt.  Per-sample accuracies are 0/1
indicators that aggregate to dataset fractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import PointMap
from .losses import normal_angles, normals_from_pointmap, point_loss_flat
from .transforms import RigidTransform, rotation_angle

DEFAULT_RELATIVE_THRESHOLD = 0.03
DEFAULT_ABSOLUTE_THRESHOLD = 0.01


@dataclass(frozen=True)
class PointMapReport:
    point_err: float
    normal_err: float
    scale_err: float

    def __post_init__(self):
        if min(self.point_err, self.normal_err, self.scale_err) < 0:
            raise ValueError("point map errors must be non-negative")


@dataclass(frozen=True)
class PoseReport:
    rte: float
    rre: float
    rta: float
    rra: float
    t_threshold: float
    r_threshold: float

    def __post_init__(self):
        if not (0 <= self.rta <= 1 and 0 <= self.rra <= 1):
            raise ValueError("accuracies must lie in [0, 1]")


@dataclass(frozen=True)
class AbsolutePoseReport:
    ate: float
    are: float
    ata: float
    ara: float
    t_threshold: float
    r_threshold: float

    def __post_init__(self):
        if not (0 <= self.ata <= 1 and 0 <= self.ara <= 1):
            raise ValueError("accuracies must lie in [0, 1]")


def point_map_metrics(
    pred: PointMap, gt: PointMap, pred_scale: float, gt_scale: float
) -> PointMapReport:
    """Scale-aligned point error, normal angle error, and relative scale error."""
    return point_map_metrics_views([pred], [gt], pred_scale, gt_scale)


def point_map_metrics_views(
    pred_views, gt_views, pred_scale: float, gt_scale: float
) -> PointMapReport:
    """Multi-view variant: one alignment scale jointly over all views."""
    if len(pred_views) != len(gt_views) or not pred_views:
        raise ValueError("need equal, non-empty lists of predicted and gt maps")
    if not (gt_scale > 0):
        raise ValueError(f"ground-truth scale must be positive, got {gt_scale}")
    pred_pts, gt_pts, angles = [], [], []
    for p, g in zip(pred_views, gt_views):
        if p.shape != g.shape:
            raise ValueError(f"view shapes differ: {p.shape} vs {g.shape}")
        both = p.valid & g.valid
        pred_pts.append(p.values[both])
        gt_pts.append(g.values[both])
        angles.append(normal_angles(normals_from_pointmap(p), normals_from_pointmap(g)))
    pred_flat = np.concatenate(pred_pts)
    gt_flat = np.concatenate(gt_pts)
    if pred_flat.shape[0] == 0:
        raise ValueError("no jointly valid pixels across views")
    all_angles = np.concatenate(angles)
    return PointMapReport(
        point_err=point_loss_flat(pred_flat, gt_flat),
        normal_err=float(all_angles.mean()) if all_angles.size else 0.0,
        scale_err=abs(pred_scale - gt_scale) / gt_scale,
    )


def relative_pose_metrics(
    pred: RigidTransform,
    gt: RigidTransform,
    t_threshold: float = DEFAULT_RELATIVE_THRESHOLD,
    r_threshold: float = DEFAULT_RELATIVE_THRESHOLD,
) -> PoseReport:
    """Per-pair RTE/RRE with 0/1 threshold accuracies."""
    rte = float(np.linalg.norm(pred.translation - gt.translation))
    rre = rotation_angle(pred.rotation, gt.rotation)
    return PoseReport(
        rte=rte,
        rre=rre,
        rta=1.0 if rte < t_threshold else 0.0,
        rra=1.0 if rre < r_threshold else 0.0,
        t_threshold=t_threshold,
        r_threshold=r_threshold,
    )


def absolute_pose_metrics(
    pred: RigidTransform,
    gt: RigidTransform,
    t_threshold: float = DEFAULT_ABSOLUTE_THRESHOLD,
    r_threshold: float = DEFAULT_ABSOLUTE_THRESHOLD,
) -> AbsolutePoseReport:
    """ATE/ARE of the camera pose expressed in the robot base frame."""
    ate = float(np.linalg.norm(pred.translation - gt.translation))
    are = rotation_angle(pred.rotation, gt.rotation)
    return AbsolutePoseReport(
        ate=ate,
        are=are,
        ata=1.0 if ate < t_threshold else 0.0,
        ara=1.0 if are < r_threshold else 0.0,
        t_threshold=t_threshold,
        r_threshold=r_threshold,
    )


def aggregate(reports):
    """Arithmetic mean of every error field; accuracies become fractions.

    Accepts a non-empty list of PointMapReport, PoseReport or
    AbsolutePoseReport and returns a summary of the same type.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    first = reports[0]
    kind = type(first)
    if any(type(r) is not kind for r in reports):
        raise ValueError("cannot aggregate mixed report types")
    if kind is PointMapReport:
        return PointMapReport(
            point_err=float(np.mean([r.point_err for r in reports])),
            normal_err=float(np.mean([r.normal_err for r in reports])),
            scale_err=float(np.mean([r.scale_err for r in reports])),
        )
    if kind is PoseReport:
        return PoseReport(
            rte=float(np.mean([r.rte for r in reports])),
            rre=float(np.mean([r.rre for r in reports])),
            rta=float(np.mean([r.rta for r in reports])),
            rra=float(np.mean([r.rra for r in reports])),
            t_threshold=first.t_threshold,
            r_threshold=first.r_threshold,
        )
    if kind is AbsolutePoseReport:
        return AbsolutePoseReport(
            ate=float(np.mean([r.ate for r in reports])),
            are=float(np.mean([r.are for r in reports])),
            ata=float(np.mean([r.ata for r in reports])),
            ara=float(np.mean([r.ara for r in reports])),
            t_threshold=first.t_threshold,
            r_threshold=first.r_threshold,
        )
    raise TypeError(f"cannot aggregate reports of type {kind.__name__}")
