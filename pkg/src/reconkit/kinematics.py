"""Serial-chain robot kinematics and keypoint placement.

Chain convention: joint k acts at the frame of link k-1 (its axis is
expressed there), and the joint's fixed origin transform then carries the
moved frame out to link k:

    pose(link 0) = identity (base)
    pose(link k) = pose(link k-1) @ motion(q_k) @ origin_k

so at the zero state the link poses are the running products of the origin
transforms alone.  Revolute joints rotate about the axis, prismatic joints
translate along it.

Chains and keypoint specs load from a JSON file:

    {
      "name": "arm",
      "joints": [
        {"type": "revolute", "axis": [0, 0, 1],
         "origin": [[...], [...], [...], [...]],      # 4x4 row-major
         "limits": [-3.1, 3.1]},                      # optional
        ...
      ],
      "keypoints": [{"link": 1, "offset": [0.05, 0.0, 0.1]}, ...]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .transforms import RigidTransform, rotation_about_axis

JOINT_TYPES = ("revolute", "prismatic")


class JointLimitError(ValueError):
    """Raised when a joint state violates declared limits."""


@dataclass(frozen=True, eq=False)
class Joint:
    type: str
    axis: np.ndarray
    origin: RigidTransform
    limits: tuple[float, float] | None = None

    def __post_init__(self):
        if self.type not in JOINT_TYPES:
            raise ValueError(f"unknown joint type {self.type!r}")
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"joint axis must be unit length, |axis| = {n}")
        object.__setattr__(self, "axis", a)
        if self.limits is not None:
            lo, hi = self.limits
            if not lo < hi:
                raise ValueError(f"joint limits must satisfy lo < hi, got {self.limits}")
            object.__setattr__(self, "limits", (float(lo), float(hi)))

    def motion(self, q: float) -> RigidTransform:
        if self.type == "revolute":
            return RigidTransform(rotation_about_axis(self.axis, q), np.zeros(3))
        return RigidTransform(np.eye(3), self.axis * q)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    joints: tuple
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def link_count(self) -> int:
        return len(self.joints) + 1

    def check_state(self, state) -> np.ndarray:
        q = np.asarray(state, dtype=float).reshape(-1)
        if q.shape[0] != self.dof:
            raise ValueError(f"joint state has {q.shape[0]} values, chain has {self.dof}")
        for k, (joint, qk) in enumerate(zip(self.joints, q)):
            if joint.limits is not None and not (joint.limits[0] <= qk <= joint.limits[1]):
                raise JointLimitError(
                    f"joint {k} value {qk} outside limits {joint.limits}"
                )
        return q


@dataclass(frozen=True, eq=False)
class KeypointSpec:
    """Keypoints pinned to links: (link index, offset in the link frame)."""

    links: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        links = np.asarray(self.links, dtype=int).reshape(-1)
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1, 3)
        if links.shape[0] != offsets.shape[0]:
            raise ValueError("keypoint links and offsets differ in length")
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "offsets", offsets)

    def __len__(self) -> int:
        return len(self.links)

    def check(self, chain: KinematicChain):
        if len(self) and (self.links.min() < 0 or self.links.max() >= chain.link_count):
            raise ValueError(
                f"keypoint link indices must lie in [0, {chain.link_count - 1}]"
            )


def forward_kinematics(chain: KinematicChain, state) -> list[RigidTransform]:
    """Base-frame poses of all Q+1 links (base first)."""
    q = chain.check_state(state)
    poses = [RigidTransform.identity()]
    for joint, qk in zip(chain.joints, q):
        poses.append(poses[-1].compose(joint.motion(qk)).compose(joint.origin))
    return poses


def keypoints_3d(chain: KinematicChain, state, spec: KeypointSpec) -> np.ndarray:
    """N_kp base-frame positions: each keypoint is its link pose applied to its offset."""
    spec.check(chain)
    poses = forward_kinematics(chain, state)
    out = np.empty((len(spec), 3))
    for i, (link, offset) in enumerate(zip(spec.links, spec.offsets)):
        out[i] = poses[link].apply(offset)
    return out


def load_chain(path) -> tuple[KinematicChain, KeypointSpec]:
    path = Path(path)
    data = json.loads(path.read_text())
    joints = []
    for j in data["joints"]:
        joints.append(
            Joint(
                type=j["type"],
                axis=np.asarray(j["axis"], dtype=float),
                origin=RigidTransform.from_matrix(np.asarray(j["origin"], dtype=float)),
                limits=tuple(j["limits"]) if j.get("limits") is not None else None,
            )
        )
    chain = KinematicChain(joints=tuple(joints), name=data.get("name", path.stem))
    kps = data.get("keypoints", [])
    spec = KeypointSpec(
        links=[kp["link"] for kp in kps],
        offsets=[kp["offset"] for kp in kps],
    )
    spec.check(chain)
    return chain, spec


def save_chain(path, chain: KinematicChain, spec: KeypointSpec):
    data = {
        "name": chain.name,
        "joints": [
            {
                "type": j.type,
                "axis": j.axis.tolist(),
                "origin": j.origin.matrix().tolist(),
                "limits": list(j.limits) if j.limits is not None else None,
            }
            for j in chain.joints
        ],
        "keypoints": [
            {"link": int(l), "offset": o.tolist()}
            for l, o in zip(spec.links, spec.offsets)
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))
