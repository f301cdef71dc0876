"""Stickman generation: synthesize hand-drawn six-stroke figures from 3-D poses.

A stickman is six unlabeled one-stroke polylines (head circle, torso, four
limbs) in the drawing box [-1, 1]^2. Training data applies three hand-drawing
perturbations: smoothed jitter along each stroke, a rigid per-stroke offset
(misplacement), and a per-stroke scale about the stroke centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .skeleton import (CHEST, HEAD, L_ANKLE, L_ELBOW, L_HIP, L_KNEE, L_SHOULDER,
                       L_WRIST, NECK, PELVIS, R_ANKLE, R_ELBOW, R_HIP, R_KNEE,
                       R_SHOULDER, R_WRIST, SPINE)

MAX_STROKE_POINTS = 64
HEAD_CIRCLE_SEGMENTS = 8
HEAD_RADIUS_FACTOR = 0.75  # relative to neck-head distance


@dataclass
class Stroke:
    """One pen stroke: (k, 2) points inside [-1, 1]^2, 2 <= k <= 64."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("stroke points must be (k, 2)")
        k = self.points.shape[0]
        if not 2 <= k <= MAX_STROKE_POINTS:
            raise ValueError(f"stroke must have 2..{MAX_STROKE_POINTS} points, got {k}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("stroke points must be finite")
        if np.any(np.abs(self.points) > 1.0 + 1e-9):
            raise ValueError("stroke points must lie inside the drawing box")


@dataclass
class StickmanSketch:
    """Exactly six strokes, unlabeled and order-free."""

    strokes: list[Stroke]

    def __post_init__(self):
        if len(self.strokes) != 6:
            raise ValueError(f"a stickman has exactly 6 strokes, got {len(self.strokes)}")

    def to_wire(self) -> list[list[list[float]]]:
        return [s.points.tolist() for s in self.strokes]

    @staticmethod
    def from_wire(strokes: list) -> "StickmanSketch":
        return StickmanSketch([Stroke(np.asarray(p, dtype=np.float64)) for p in strokes])


@dataclass(frozen=True)
class SgaStyle:
    jitter_sigma: float = 0.01
    misplace_sigma: float = 0.03
    scale_range: tuple[float, float] = (0.85, 1.15)
    points_per_stroke: int = 16

    def __post_init__(self):
        if self.jitter_sigma < 0 or self.misplace_sigma < 0:
            raise ValueError("noise scales must be >= 0")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        if not 2 <= self.points_per_stroke <= MAX_STROKE_POINTS:
            raise ValueError("points_per_stroke out of range")


NOISELESS_STYLE = SgaStyle(jitter_sigma=0.0, misplace_sigma=0.0, scale_range=(1.0, 1.0))


def project_frontal(pose: np.ndarray) -> tuple[np.ndarray, bool]:
    """Frontal orthographic projection of a pelvis-relative pose.

    Rotates about the vertical axis until the hip axis lies in the image
    plane (viewing direction perpendicular to the pelvic plane), then drops
    depth. The pelvis maps to the box center and the 2-D bounding box is
    scaled into [-0.9, 0.9]^2. Returns (points (J, 2), frontalized flag);
    the flag is False when coincident hips force a raw projection.
    """
    pose = np.asarray(pose, dtype=np.float64)
    hip_axis = pose[L_HIP] - pose[R_HIP]
    planar = np.array([hip_axis[0], hip_axis[2]])
    norm = np.linalg.norm(planar)
    frontalized = norm > 1e-8
    if frontalized:
        # Yaw that maps the planar hip axis onto +x.
        c, s = planar / norm
        rot = np.array([[c, s], [-s, c]])
        xz = pose[:, [0, 2]] @ rot.T
        pts3 = np.stack([xz[:, 0], pose[:, 1], xz[:, 1]], axis=1)
    else:
        pts3 = pose
    flat = np.stack([pts3[:, 0], pts3[:, 1]], axis=1)
    flat = flat - flat[PELVIS]
    span = max(np.abs(flat).max(), 1e-8)
    return flat * (0.9 / span), frontalized


def _densify(chain: np.ndarray, k: int) -> np.ndarray:
    """Resample a joint-chain polyline to k points at equal arc length."""
    seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] <= 0:
        return np.repeat(chain[:1], k, axis=0)
    t = np.linspace(0.0, arc[-1], k)
    x = np.interp(t, arc, chain[:, 0])
    y = np.interp(t, arc, chain[:, 1])
    return np.stack([x, y], axis=1)


def noiseless_strokes(pose: np.ndarray, style: SgaStyle = NOISELESS_STYLE) -> list[np.ndarray]:
    """Canonical-order stroke geometry: head, torso, arms, legs (no noise)."""
    pts, _ = project_frontal(pose)
    k = style.points_per_stroke
    radius = HEAD_RADIUS_FACTOR * np.linalg.norm(pts[HEAD] - pts[NECK])
    ang = np.linspace(0.0, 2.0 * np.pi, HEAD_CIRCLE_SEGMENTS + 1)
    head = pts[HEAD] + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    chains = [
        pts[[NECK, CHEST, SPINE, PELVIS]],
        pts[[L_SHOULDER, L_ELBOW, L_WRIST]],
        pts[[R_SHOULDER, R_ELBOW, R_WRIST]],
        pts[[L_HIP, L_KNEE, L_ANKLE]],
        pts[[R_HIP, R_KNEE, R_ANKLE]],
    ]
    return [head] + [_densify(c, k) for c in chains]


def _smooth_jitter(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    """Low-pass jitter walk whose second differences stay within 3*sigma.

    Gaussian increments are clamped to 1.5*sigma, accumulated, then smoothed
    with a 3-tap moving average (edge-replicated); both steps preserve the
    second-difference bound.
    """
    steps = np.clip(rng.normal(0.0, sigma, size=(n, 2)), -1.5 * sigma, 1.5 * sigma)
    walk = np.cumsum(steps, axis=0)
    walk -= walk.mean(axis=0)
    padded = np.concatenate([walk[:1], walk, walk[-1:]], axis=0)
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def generate_stickman(pose: np.ndarray, style: SgaStyle, seed: int) -> StickmanSketch:
    """Six perturbed strokes from a pose; deterministic in (pose, style, seed).

    Stroke order is shuffled by the seed so consumers cannot rely on labels.
    """
    rng = np.random.default_rng(seed)
    strokes = []
    for base in noiseless_strokes(pose, style):
        pts = base.copy()
        if style.jitter_sigma > 0:
            pts = pts + _smooth_jitter(rng, pts.shape[0], style.jitter_sigma)
        scale = rng.uniform(style.scale_range[0], style.scale_range[1])
        centroid = pts.mean(axis=0)
        pts = centroid + scale * (pts - centroid)
        if style.misplace_sigma > 0:
            pts = pts + rng.normal(0.0, style.misplace_sigma, size=2)
        strokes.append(Stroke(np.clip(pts, -1.0, 1.0)))
    order = rng.permutation(6)
    return StickmanSketch([strokes[i] for i in order])


def random_style(rng: np.random.Generator) -> SgaStyle:
    """Training-time style jitter: widen the default perturbation ranges."""
    return SgaStyle(
        jitter_sigma=rng.uniform(0.0, 0.02),
        misplace_sigma=rng.uniform(0.0, 0.06),
        scale_range=tuple(sorted(rng.uniform(0.8, 1.2, size=2))),
        points_per_stroke=16,
    )
