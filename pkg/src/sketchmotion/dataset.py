"""Procedural synthetic motion dataset: parametric root paths + limb cycles.

Every clip belongs to one motion family. Root paths are closed-form; limb
motion comes from joint-angle cycles run through forward kinematics, so bone
lengths are exact by construction. Generation is a pure function of the
config: sample i is drawn from a generator seeded by SeedSequence([seed, i]),
which makes any worker partitioning byte-identical to a serial run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motion import FPS, MotionSequence
from .skeleton import PoseAngles, pose_from_angles

FAMILIES = [
    "straight_walk",
    "circle_walk",
    "s_curve_walk",
    "turn_in_place",
    "squat",
    "walk_left_arm_raise",
    "walk_right_arm_raise",
    "walk_then_stop",
]

_CAPTIONS: dict[str, list[str]] = {
    "straight_walk": [
        "a person walks forward in a straight line",
        "someone walks straight ahead at a steady pace",
    ],
    "circle_walk": [
        "a person walks along a circle",
        "someone walks around in a circular path",
    ],
    "s_curve_walk": [
        "a person walks forward weaving in an s shaped curve",
        "someone walks ahead swerving left and right",
    ],
    "turn_in_place": [
        "a person turns around in place",
        "someone rotates on the spot without moving",
    ],
    "squat": [
        "a person squats down and stands up repeatedly",
        "someone bends the knees into a squat then rises",
    ],
    "walk_left_arm_raise": [
        "a person walks forward with the left arm raised high",
        "someone walks ahead holding the left hand up",
    ],
    "walk_right_arm_raise": [
        "a person walks forward with the right arm raised high",
        "someone walks ahead holding the right hand up",
    ],
    "walk_then_stop": [
        "a person walks forward then stops and stands still",
        "someone walks ahead and comes to a stop",
    ],
}


def build_vocabulary() -> list[str]:
    """Fixed token list covering every caption template."""
    tokens = {"<pad>"}
    for templates in _CAPTIONS.values():
        for text in templates:
            tokens.update(text.split())
    return sorted(tokens)


VOCABULARY = build_vocabulary()


@dataclass(frozen=True)
class DatasetConfig:
    seed: int
    sample_count: int
    families: tuple[str, ...] = tuple(FAMILIES)
    T: int = 60
    fps: float = FPS
    vocabulary: tuple[str, ...] = tuple(VOCABULARY)

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")
        if not self.families:
            raise ValueError("families must be non-empty")
        for fam in self.families:
            if fam not in _CAPTIONS:
                raise ValueError(f"unknown motion family: {fam!r}")


def tokenize(text: str) -> list[str]:
    return text.lower().split()


# -- root path generators ---------------------------------------------------------


def straight_walk_path(speed: float, heading: float, T: int, fps: float) -> np.ndarray:
    """Constant-speed straight line from the origin; spacing is speed/fps."""
    t = np.arange(T) / fps
    d = np.array([np.cos(heading), np.sin(heading)])
    return t[:, None] * speed * d


def circle_path(radius: float, omega: float, T: int, fps: float) -> np.ndarray:
    t = np.arange(T) / fps
    ang = omega * t
    return np.stack([radius * np.sin(ang), radius * (1.0 - np.cos(ang))], axis=1)


def s_curve_path(speed: float, amp: float, wav: float, T: int, fps: float) -> np.ndarray:
    t = np.arange(T) / fps
    x = speed * t
    z = amp * np.sin(2.0 * np.pi * x / wav)
    return np.stack([x, z], axis=1)


def ramp_stop_path(speed: float, stop_frac: float, T: int, fps: float) -> np.ndarray:
    """Walk at `speed`, decelerate smoothly to rest by stop_frac of the clip."""
    t = np.arange(T) / fps
    t_stop = stop_frac * (T - 1) / fps
    vel = np.where(t < t_stop, speed * 0.5 * (1.0 + np.cos(np.pi * t / t_stop)), 0.0)
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vel[1:] + vel[:-1]) / fps)])
    return np.stack([x, np.zeros(T)], axis=1)


def _gait_angles(phase: np.ndarray, swing: float, knee: float, arm: float,
                 l_raise: float = 0.0, r_raise: float = 0.0,
                 amp_env: np.ndarray | None = None) -> list[PoseAngles]:
    env = np.ones_like(phase) if amp_env is None else amp_env
    out = []
    for p, e in zip(phase, env):
        s = np.sin(p)
        out.append(PoseAngles(
            l_hip_swing=e * swing * s,
            r_hip_swing=-e * swing * s,
            l_knee_flex=e * knee * max(0.0, -s),
            r_knee_flex=e * knee * max(0.0, s),
            l_arm_swing=(-e * arm * s if l_raise == 0.0 else 0.0),
            r_arm_swing=(e * arm * s if r_raise == 0.0 else 0.0),
            l_arm_raise=l_raise,
            r_arm_raise=r_raise,
        ))
    return out


def _squat_angles(phase: np.ndarray, depth: float) -> list[PoseAngles]:
    out = []
    for p in phase:
        bend = depth * 0.5 * (1.0 - np.cos(p))
        out.append(PoseAngles(
            l_hip_swing=bend * 0.9, r_hip_swing=bend * 0.9,
            l_knee_flex=2.0 * bend, r_knee_flex=2.0 * bend,
            l_arm_swing=bend * 0.6, r_arm_swing=bend * 0.6,
            torso_lean=bend * 0.25,
        ))
    return out


def _heading_from_path(path: np.ndarray) -> np.ndarray:
    d = np.diff(path, axis=0)
    yaw = np.zeros(path.shape[0])
    moving = np.linalg.norm(d, axis=1) > 1e-9
    ang = np.arctan2(d[:, 1], d[:, 0])
    last = 0.0
    for i in range(d.shape[0]):
        if moving[i]:
            last = ang[i]
        yaw[i] = last
    yaw[-1] = last
    return yaw


def generate_clip(family: str, T: int, fps: float,
                  rng: np.random.Generator) -> MotionSequence:
    if family not in _CAPTIONS:
        raise ValueError(f"unknown motion family: {family!r}")
    step_hz = rng.uniform(1.4, 2.0)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    phase = phase0 + 2.0 * np.pi * step_hz * np.arange(T) / fps
    swing = rng.uniform(0.45, 0.65)
    knee = rng.uniform(0.5, 0.9)
    arm = rng.uniform(0.3, 0.5)
    yaw = None

    if family == "straight_walk":
        path = straight_walk_path(rng.uniform(0.8, 1.4), rng.uniform(-np.pi, np.pi), T, fps)
        angles = _gait_angles(phase, swing, knee, arm)
    elif family == "circle_walk":
        radius = rng.uniform(0.8, 1.6) * rng.choice([-1.0, 1.0])
        path = circle_path(radius, rng.uniform(0.8, 1.4), T, fps)
        angles = _gait_angles(phase, swing, knee, arm)
    elif family == "s_curve_walk":
        path = s_curve_path(rng.uniform(0.8, 1.2), rng.uniform(0.3, 0.6),
                            rng.uniform(1.5, 2.5), T, fps)
        angles = _gait_angles(phase, swing, knee, arm)
    elif family == "turn_in_place":
        path = np.zeros((T, 2))
        rate = rng.uniform(0.8, 1.6) * rng.choice([-1.0, 1.0])
        yaw = rate * np.arange(T) / fps
        angles = _gait_angles(phase, 0.12, 0.25, 0.15)
    elif family == "squat":
        path = np.zeros((T, 2))
        yaw = np.full(T, rng.uniform(-np.pi, np.pi))
        squat_hz = rng.uniform(0.5, 0.8)
        angles = _squat_angles(phase0 + 2.0 * np.pi * squat_hz * np.arange(T) / fps,
                               rng.uniform(0.5, 0.7))
    elif family == "walk_left_arm_raise":
        path = straight_walk_path(rng.uniform(0.8, 1.3), rng.uniform(-np.pi, np.pi), T, fps)
        angles = _gait_angles(phase, swing, knee, arm, l_raise=rng.uniform(2.4, 2.8))
    elif family == "walk_right_arm_raise":
        path = straight_walk_path(rng.uniform(0.8, 1.3), rng.uniform(-np.pi, np.pi), T, fps)
        angles = _gait_angles(phase, swing, knee, arm, r_raise=rng.uniform(2.4, 2.8))
    else:  # walk_then_stop
        stop_frac = rng.uniform(0.5, 0.75)
        path = ramp_stop_path(rng.uniform(0.9, 1.4), stop_frac, T, fps)
        env = np.clip((stop_frac * (T - 1) - np.arange(T)) / (stop_frac * (T - 1)), 0.0, 1.0)
        env = np.sqrt(np.clip(env * 2.0, 0.0, 1.0))
        angles = _gait_angles(phase, swing, knee, arm, amp_env=env)

    pose = np.stack([pose_from_angles(a) for a in angles])
    if yaw is None:
        yaw = _heading_from_path(path)
    caption = tokenize(rng.choice(_CAPTIONS[family]))
    return MotionSequence(fps=fps, root_xz=path, root_yaw=yaw, local_pose=pose,
                          caption=caption)


def generate_synthetic_dataset(config: DatasetConfig) -> list[tuple[MotionSequence, list[str]]]:
    """Deterministic (clip, caption tokens) pairs; captions also ride on the clip."""
    out = []
    for i in range(config.sample_count):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i]))
        family = config.families[i % len(config.families)]
        clip = generate_clip(family, config.T, config.fps, rng)
        for tok in clip.caption:
            if tok not in config.vocabulary:
                raise ValueError(f"caption token {tok!r} outside vocabulary")
        out.append((clip, list(clip.caption)))
    return out
