"""Scene-level drivers binding the oracle, mock predictor, losses and
metrics into reproducible runs.

Every run is a pure function of (bundle bytes, config): per-scene seeds
derive from the master seed and the scene index, scenes fan out over a
process pool, and results reduce in scene order, so reports and manifests
are byte-identical across re-runs and across worker counts.  The worker
count itself is therefore not echoed into reports.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .camera import unproject
from .losses import (
    LossWeights,
    keypoint_loss,
    mask_loss,
    normal_angles,
    normals_from_pointmap,
    point_loss_flat,
    relative_pose_loss,
    st_loss,
)
from .metrics import (
    AbsolutePoseReport,
    PointMapReport,
    PoseReport,
    absolute_pose_metrics,
    aggregate,
    point_map_metrics_views,
    relative_pose_metrics,
)
from .oracle.bundle import SceneBundle, generate_scene, load_bundle, random_scene_spec, save_bundle
from .oracle.mock import (
    NoiseModel,
    ground_truth_heatmaps,
    ground_truth_keypoints,
    mock_predict,
)
from .transforms import relative_pose


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scenes: int = 1
    views: int = 2
    width: int = 160
    height: int = 120
    noise: NoiseModel = field(default_factory=NoiseModel)
    t_threshold_rel: float = 0.03
    r_threshold_rel: float = 0.03
    t_threshold_abs: float = 0.01
    r_threshold_abs: float = 0.01
    weights: LossWeights = field(default_factory=LossWeights)
    workers: int = 1

    def echo(self, generation: bool = True) -> dict:
        d = asdict(self)
        d.pop("workers")  # reports must not depend on the execution layout
        if not generation:
            # evaluation derives scene geometry from the bundles themselves
            for key in ("scenes", "views", "width", "height"):
                d.pop(key)
        return d


def scene_seed(master_seed: int, index: int) -> int:
    """Stable per-scene seed, independent of scheduling."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def scene_dir_name(index: int) -> str:
    return f"scene_{index:05d}"


def _run_parallel(worker, payloads, workers: int):
    """Ordered map over payloads, inline for one worker."""
    if workers <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, payloads))


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------


def _gen_one(payload) -> dict:
    out_dir, index, config = payload
    seed = scene_seed(config.seed, index)
    spec = random_scene_spec(
        seed, views=config.views, width=config.width, height=config.height
    )
    bundle = generate_scene(spec, seed)
    name = scene_dir_name(index)
    save_bundle(Path(out_dir) / name, bundle)
    return {"path": name, "seed": seed}


def run_gen_scenes(config: RunConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payloads = [(str(out_dir), i, config) for i in range(config.scenes)]
    rows = _run_parallel(_gen_one, payloads, config.workers)
    manifest = {
        "command": "gen-scenes",
        "config": config.echo(),
        "bundles": rows,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def list_bundles(bundle_root) -> list[Path]:
    root = Path(bundle_root)
    manifest = root / "manifest.json"
    if manifest.exists():
        rows = json.loads(manifest.read_text())["bundles"]
        return [root / r["path"] for r in rows]
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no scene bundles under {root}")
    return dirs


# ---------------------------------------------------------------------------
# Per-scene evaluation
# ---------------------------------------------------------------------------


def predicted_point_maps(bundle: SceneBundle, pred):
    return [unproject(c, d) for c, d in zip(pred.coords, pred.depths)]


def ground_truth_point_maps(bundle: SceneBundle):
    return [unproject(v.coords, v.depth) for v in bundle.views]


def evaluate_pointmap_scene(bundle: SceneBundle, noise: NoiseModel, seed: int) -> PointMapReport:
    pred = mock_predict(bundle, noise, seed)
    return point_map_metrics_views(
        predicted_point_maps(bundle, pred),
        ground_truth_point_maps(bundle),
        pred.similarity.scale,
        bundle.similarity.scale,
    )


def evaluate_pose_scene(
    bundle: SceneBundle, noise: NoiseModel, seed: int, config: RunConfig
) -> tuple[PoseReport, AbsolutePoseReport]:
    if len(bundle.views) < 2:
        raise ValueError("relative pose metrics need binocular scenes")
    pred = mock_predict(bundle, noise, seed)
    rel_gt = relative_pose(bundle.views[0].pose_world, bundle.views[1].pose_world)
    rel = relative_pose_metrics(
        pred.rel_poses[1], rel_gt, config.t_threshold_rel, config.r_threshold_rel
    )
    absolute = absolute_pose_metrics(
        pred.similarity.rigid,
        bundle.similarity.rigid,
        config.t_threshold_abs,
        config.r_threshold_abs,
    )
    return rel, absolute


def evaluate_losses_scene(
    bundle: SceneBundle, noise: NoiseModel, seed: int, weights: LossWeights = LossWeights()
) -> dict:
    """All six objectives for one scene (views combined per loss definition)."""
    pred = mock_predict(bundle, noise, seed)
    pred_maps = predicted_point_maps(bundle, pred)
    gt_maps = ground_truth_point_maps(bundle)

    pred_flat, gt_flat = [], []
    angle_sum, angle_count = 0.0, 0
    for pm, gm in zip(pred_maps, gt_maps):
        both = pm.valid & gm.valid
        pred_flat.append(pm.values[both])
        gt_flat.append(gm.values[both])
        angles = normal_angles(normals_from_pointmap(pm), normals_from_pointmap(gm))
        angle_sum += float(angles.sum())
        angle_count += angles.size
    point = point_loss_flat(np.concatenate(pred_flat), np.concatenate(gt_flat))
    normal = angle_sum / angle_count if angle_count else 0.0

    mask = float(
        np.mean([mask_loss(p, v.masks) for p, v in zip(pred.masks, bundle.views)])
    )

    rel_terms = []
    for j in range(1, len(bundle.views)):
        rel_gt = relative_pose(bundle.views[0].pose_world, bundle.views[j].pose_world)
        rel_terms.append(relative_pose_loss(pred.rel_poses[j], rel_gt, weights.alpha))
    rel = float(np.mean(rel_terms)) if rel_terms else 0.0

    st = st_loss(pred.similarity, bundle.similarity, weights.beta1, weights.beta2)

    gt_hm = ground_truth_heatmaps(bundle)
    gt_kp = ground_truth_keypoints(bundle)
    kp = float(
        np.mean(
            [
                keypoint_loss(pred.heatmaps[i], gt_hm[i], pred.keypoints_2d[i], gt_kp[i], weights.gamma)
                for i in range(len(bundle.views))
            ]
        )
    )

    terms = {
        "point": point,
        "normal": normal,
        "mask": mask,
        "relative_pose": rel,
        "similarity": st,
        "keypoint": kp,
    }
    lam = (
        weights.lambda1,
        weights.lambda2,
        weights.lambda3,
        weights.lambda4,
        weights.lambda5,
        weights.lambda6,
    )
    terms["total"] = float(sum(l * t for l, t in zip(lam, terms.values())))
    return terms


# ---------------------------------------------------------------------------
# Dataset-level runs
# ---------------------------------------------------------------------------


def _eval_pointmap_one(payload):
    bundle_dir, index, config = payload
    try:
        bundle = load_bundle(bundle_dir)
        report = evaluate_pointmap_scene(bundle, config.noise, scene_seed(config.seed, index))
        return {"scene": Path(bundle_dir).name, "report": report}
    except Exception as exc:  # per-scene failures surface in the run report
        return {"scene": Path(bundle_dir).name, "error": f"{type(exc).__name__}: {exc}"}


def _eval_pose_one(payload):
    bundle_dir, index, config = payload
    try:
        bundle = load_bundle(bundle_dir)
        rel, absolute = evaluate_pose_scene(
            bundle, config.noise, scene_seed(config.seed, index), config
        )
        return {"scene": Path(bundle_dir).name, "relative": rel, "absolute": absolute}
    except Exception as exc:
        return {"scene": Path(bundle_dir).name, "error": f"{type(exc).__name__}: {exc}"}


def run_eval_pointmap(config: RunConfig, bundle_root) -> dict:
    dirs = list_bundles(bundle_root)
    payloads = [(str(d), i, config) for i, d in enumerate(dirs)]
    rows = _run_parallel(_eval_pointmap_one, payloads, config.workers)
    scenes, failures, reports = [], [], []
    for row in rows:
        if "error" in row:
            failures.append({"scene": row["scene"], "error": row["error"]})
        else:
            r = row["report"]
            reports.append(r)
            scenes.append({"scene": row["scene"], **asdict(r)})
    out = {
        "command": "eval-pointmap",
        "config": config.echo(generation=False),
        "scenes": scenes,
        "failures": failures,
    }
    if reports:
        out["summary"] = asdict(aggregate(reports))
    return out


def run_eval_pose(config: RunConfig, bundle_root) -> dict:
    dirs = list_bundles(bundle_root)
    payloads = [(str(d), i, config) for i, d in enumerate(dirs)]
    rows = _run_parallel(_eval_pose_one, payloads, config.workers)
    scenes, failures, rels, abss = [], [], [], []
    for row in rows:
        if "error" in row:
            failures.append({"scene": row["scene"], "error": row["error"]})
        else:
            rels.append(row["relative"])
            abss.append(row["absolute"])
            scenes.append(
                {
                    "scene": row["scene"],
                    "relative": asdict(row["relative"]),
                    "absolute": asdict(row["absolute"]),
                }
            )
    out = {
        "command": "eval-pose",
        "config": config.echo(generation=False),
        "scenes": scenes,
        "failures": failures,
    }
    if rels:
        out["summary"] = {
            "relative": asdict(aggregate(rels)),
            "absolute": asdict(aggregate(abss)),
        }
    return out


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True))


def default_workers() -> int:
    return os.cpu_count() or 1
