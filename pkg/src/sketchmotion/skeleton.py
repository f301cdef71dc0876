"""Fixed 17-joint toy skeleton and angle-driven forward kinematics.

Canonical (heading-free) frame: y up, character faces +z, character's left
side toward +x. Poses are pelvis-relative with the pelvis at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JOINT_NAMES = [
    "pelvis", "spine", "chest", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
]

PELVIS, SPINE, CHEST, NECK, HEAD = 0, 1, 2, 3, 4
L_SHOULDER, L_ELBOW, L_WRIST = 5, 6, 7
R_SHOULDER, R_ELBOW, R_WRIST = 8, 9, 10
L_HIP, L_KNEE, L_ANKLE = 11, 12, 13
R_HIP, R_KNEE, R_ANKLE = 14, 15, 16

SKELETON_ID = "toy17-v1"


@dataclass(frozen=True)
class Skeleton:
    """Joint topology: parent indices (root points at itself) and bone lengths."""

    joint_count: int
    parent: tuple[int, ...]
    bone_length: tuple[float, ...]

    def __post_init__(self):
        if len(self.parent) != self.joint_count or len(self.bone_length) != self.joint_count:
            raise ValueError("parent/bone_length must have joint_count entries")
        roots = [j for j, p in enumerate(self.parent) if p == j]
        if roots != [0]:
            raise ValueError("exactly one root (index 0) required")
        # Acyclicity: walking parents from any joint must reach the root.
        for j in range(self.joint_count):
            seen, cur = set(), j
            while cur != 0:
                if cur in seen or not (0 <= self.parent[cur] < self.joint_count):
                    raise ValueError("parent array must be acyclic")
                seen.add(cur)
                cur = self.parent[cur]
        if any(l <= 0 for l in self.bone_length[1:]):
            raise ValueError("bone lengths must be positive")

    def topo_order(self) -> list[int]:
        order, placed = [], {0}
        pending = list(range(1, self.joint_count))
        while pending:
            for j in list(pending):
                if self.parent[j] in placed:
                    order.append(j)
                    placed.add(j)
                    pending.remove(j)
        return order


_PARENT = (
    PELVIS,           # pelvis -> itself
    PELVIS,           # spine
    SPINE,            # chest
    CHEST,            # neck
    NECK,             # head
    CHEST, L_SHOULDER, L_ELBOW,
    CHEST, R_SHOULDER, R_ELBOW,
    PELVIS, L_HIP, L_KNEE,
    PELVIS, R_HIP, R_KNEE,
)

_BONE = (
    0.0,              # pelvis (root, unused)
    0.22,             # pelvis->spine
    0.22,             # spine->chest
    0.12,             # chest->neck
    0.14,             # neck->head
    0.19, 0.28, 0.26,  # left arm: chest->shoulder, upper arm, forearm
    0.19, 0.28, 0.26,  # right arm
    0.10, 0.42, 0.42,  # left leg: pelvis->hip, thigh, shin
    0.10, 0.42, 0.42,  # right leg
)

TOY_SKELETON = Skeleton(joint_count=17, parent=_PARENT, bone_length=_BONE)

# Rest-pose unit directions from parent to child (T-pose, arms out sideways).
_REST_DIR = np.zeros((17, 3))
_REST_DIR[SPINE] = (0, 1, 0)
_REST_DIR[CHEST] = (0, 1, 0)
_REST_DIR[NECK] = (0, 1, 0)
_REST_DIR[HEAD] = (0, 1, 0)
_REST_DIR[L_SHOULDER] = (1, 0, 0)
_REST_DIR[L_ELBOW] = (1, 0, 0)
_REST_DIR[L_WRIST] = (1, 0, 0)
_REST_DIR[R_SHOULDER] = (-1, 0, 0)
_REST_DIR[R_ELBOW] = (-1, 0, 0)
_REST_DIR[R_WRIST] = (-1, 0, 0)
_REST_DIR[L_HIP] = (1, 0, 0)
_REST_DIR[L_KNEE] = (0, -1, 0)
_REST_DIR[L_ANKLE] = (0, -1, 0)
_REST_DIR[R_HIP] = (-1, 0, 0)
_REST_DIR[R_KNEE] = (0, -1, 0)
_REST_DIR[R_ANKLE] = (0, -1, 0)


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@dataclass
class PoseAngles:
    """Joint-angle parameterization for the toy body (radians).

    Limb swings rotate about the lateral x-axis (positive swings the limb
    toward +z, the facing direction); knees/elbows flex backward/forward from
    the parent segment; arm raises abduct about the facing z-axis.
    """

    l_hip_swing: float = 0.0
    r_hip_swing: float = 0.0
    l_knee_flex: float = 0.0
    r_knee_flex: float = 0.0
    l_arm_swing: float = 0.0
    r_arm_swing: float = 0.0
    l_arm_raise: float = 0.0
    r_arm_raise: float = 0.0
    torso_lean: float = 0.0


def pose_from_angles(a: PoseAngles, skel: Skeleton = TOY_SKELETON) -> np.ndarray:
    """Forward kinematics: joint angles -> pelvis-relative positions (J, 3).

    Bone lengths are honored exactly by construction.
    """
    dirs = _REST_DIR.copy()
    lean = rot_x(a.torso_lean)
    for j in (SPINE, CHEST, NECK, HEAD):
        dirs[j] = lean @ dirs[j]

    # Arms hang at the sides (T-pose rest is sideways): drop by 80 deg toward
    # the body, then apply raise (abduction about z) and swing (about x).
    hang_l = rot_z(np.deg2rad(-80.0))
    hang_r = rot_z(np.deg2rad(80.0))
    l_arm = rot_x(a.l_arm_swing) @ rot_z(a.l_arm_raise) @ hang_l
    r_arm = rot_x(a.r_arm_swing) @ rot_z(-a.r_arm_raise) @ hang_r
    dirs[L_ELBOW] = l_arm @ dirs[L_ELBOW]
    dirs[L_WRIST] = l_arm @ dirs[L_WRIST]
    dirs[R_ELBOW] = r_arm @ dirs[R_ELBOW]
    dirs[R_WRIST] = r_arm @ dirs[R_WRIST]

    l_thigh = rot_x(a.l_hip_swing)
    r_thigh = rot_x(a.r_hip_swing)
    dirs[L_KNEE] = l_thigh @ dirs[L_KNEE]
    dirs[R_KNEE] = r_thigh @ dirs[R_KNEE]
    dirs[L_ANKLE] = rot_x(a.l_hip_swing - a.l_knee_flex) @ dirs[L_ANKLE]
    dirs[R_ANKLE] = rot_x(a.r_hip_swing - a.r_knee_flex) @ dirs[R_ANKLE]

    pos = np.zeros((skel.joint_count, 3))
    for j in skel.topo_order():
        pos[j] = pos[skel.parent[j]] + skel.bone_length[j] * dirs[j]
    return pos


def t_pose(skel: Skeleton = TOY_SKELETON) -> np.ndarray:
    return pose_from_angles(PoseAngles(), skel)


def limb_offsets(pose: np.ndarray, skel: Skeleton = TOY_SKELETON) -> np.ndarray:
    """Per-bone parent->child offsets, shape (J-1, 3); rows follow joints 1..J-1."""
    pose = np.asarray(pose)
    parents = np.asarray(skel.parent[1:])
    return pose[1:] - pose[parents]


def pose_from_offsets(offsets: np.ndarray, skel: Skeleton = TOY_SKELETON) -> np.ndarray:
    """Rebuild pelvis-relative joints from (J-1, 3) parent->child offsets."""
    pos = np.zeros((skel.joint_count, 3))
    for j in skel.topo_order():
        pos[j] = pos[skel.parent[j]] + offsets[j - 1]
    return pos


def snap_to_bone_lengths(pose: np.ndarray, skel: Skeleton = TOY_SKELETON) -> np.ndarray:
    """Project a free-form pose onto the skeleton: renormalize each bone."""
    out = np.zeros_like(pose)
    for j in skel.topo_order():
        d = pose[j] - pose[skel.parent[j]]
        n = np.linalg.norm(d)
        d = d / n if n > 1e-9 else _REST_DIR[j]
        out[j] = out[skel.parent[j]] + skel.bone_length[j] * d
    return out


def check_bone_lengths(pose: np.ndarray, skel: Skeleton = TOY_SKELETON,
                       tol: float = 1e-6) -> bool:
    off = limb_offsets(pose, skel)
    lengths = np.linalg.norm(off, axis=1)
    return bool(np.all(np.abs(lengths - np.asarray(skel.bone_length[1:])) <= tol))
