"""Motion sequence container, trajectory extraction/resampling, clip file IO."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .skeleton import SKELETON_ID, TOY_SKELETON, Skeleton, check_bone_lengths

FPS = 20.0
CLIP_FORMAT_VERSION = 1


@dataclass
class Trajectory2D:
    """Planar path: (n, 2) points in meters, optional strictly increasing timestamps."""

    points: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("trajectory points must be (n, 2)")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("trajectory points must be finite")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
            if self.timestamps.shape != (self.points.shape[0],):
                raise ValueError("timestamps must match point count")
            if np.any(np.diff(self.timestamps) <= 0):
                raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class MotionSequence:
    """T frames of planar root translation, heading, and pelvis-relative pose."""

    fps: float
    root_xz: np.ndarray          # (T, 2) meters
    root_yaw: np.ndarray         # (T,) radians
    local_pose: np.ndarray       # (T, J, 3) meters, pelvis at origin
    caption: list[str] = field(default_factory=list)
    skeleton: Skeleton = TOY_SKELETON

    def __post_init__(self):
        self.root_xz = np.asarray(self.root_xz, dtype=np.float64)
        self.root_yaw = np.asarray(self.root_yaw, dtype=np.float64).reshape(-1)
        self.local_pose = np.asarray(self.local_pose, dtype=np.float64)
        T = self.root_xz.shape[0]
        if T < 2:
            raise ValueError("motion needs at least 2 frames")
        J = self.skeleton.joint_count
        if self.root_xz.shape != (T, 2) or self.root_yaw.shape != (T,):
            raise ValueError("root arrays must be (T,2) and (T,)")
        if self.local_pose.shape != (T, J, 3):
            raise ValueError(f"local_pose must be (T,{J},3)")
        if not (np.all(np.isfinite(self.local_pose)) and np.all(np.isfinite(self.root_xz))
                and np.all(np.isfinite(self.root_yaw))):
            raise ValueError("motion entries must be finite")
        for t in range(T):
            if not check_bone_lengths(self.local_pose[t], self.skeleton):
                raise ValueError(f"frame {t} violates bone lengths")

    @property
    def frames(self) -> int:
        return self.root_xz.shape[0]


def extract_trajectory(m: MotionSequence) -> Trajectory2D:
    """Global planar root path, verbatim from the motion."""
    return Trajectory2D(points=m.root_xz.copy())


def extract_pose(m: MotionSequence, i: int) -> np.ndarray:
    """Pelvis-relative pose of frame i, shape (J, 3)."""
    if not 0 <= i < m.frames:
        raise IndexError(f"frame {i} out of range [0, {m.frames})")
    return m.local_pose[i].copy()


def _interp_at(points: np.ndarray, params: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Linear interpolation of a polyline `points` parameterized by `params`."""
    x = np.interp(targets, params, points[:, 0])
    y = np.interp(targets, params, points[:, 1])
    return np.stack([x, y], axis=1)


def _march_equal_chords(pts: np.ndarray, arc: np.ndarray, r: float,
                        count: int) -> tuple[np.ndarray, np.ndarray]:
    """March `count` chords of Euclidean length r along the polyline.

    Each march moves to the first forward point at distance exactly r from
    the previous anchor (exact circle/segment intersection). Returns the arc
    positions of the marches (a march with no crossing stays in place) and
    the final anchor point.
    """
    positions = np.empty(count)
    pos = 0.0
    seg_idx = 0
    anchor = pts[0]
    n = pts.shape[0]
    for k in range(count):
        found = False
        idx = seg_idx
        while idx < n - 1:
            a_lo = max(arc[idx], pos)
            a_hi = arc[idx + 1]
            seg_len = arc[idx + 1] - arc[idx]
            if a_hi <= a_lo or seg_len <= 0.0:
                idx += 1
                continue
            t_lo = (a_lo - arc[idx]) / seg_len
            d = pts[idx + 1] - pts[idx]
            f = pts[idx] - anchor
            # |f + t d|^2 = r^2; the outgoing crossing is the larger root
            a_q = d @ d
            b_q = 2.0 * (f @ d)
            c_q = f @ f - r * r
            disc = b_q * b_q - 4.0 * a_q * c_q
            if disc >= 0.0:
                t = (-b_q + np.sqrt(disc)) / (2.0 * a_q)
                if t_lo - 1e-15 <= t <= 1.0:
                    t = min(max(t, t_lo), 1.0)
                    pos = arc[idx] + t * seg_len
                    anchor = pts[idx] + t * d
                    seg_idx = idx
                    found = True
                    break
            idx += 1
        if not found:
            positions[k:] = pos
            break
        positions[k] = pos
    return positions, anchor


def resample_trajectory(raw: Trajectory2D, T: int, mode: str = "uniform") -> Trajectory2D:
    """Resample a drawn polyline to exactly T points.

    uniform: equal chord spacing (drawing speed ignored) -- consecutive
    output points are the same Euclidean distance r apart, with r chosen by
    bisection so the final chord lands exactly on the endpoint. Because every
    output segment is straight with length exactly r, resampling the output
    again reproduces it; plain equal arc-length spacing is not idempotent
    (corner cutting shifts points on a second pass).
    density: equal spacing in raw sample index (drawing speed preserved --
    regions sampled densely by the pen stay dense).
    Endpoints are preserved exactly; a fully degenerate input (all points
    identical) yields T copies of that point.
    """
    if T < 2:
        raise ValueError("need T >= 2")
    pts = raw.points
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least 2 input points")
    if mode == "uniform":
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        # fixed point: T points with equal chords resample to themselves
        if n == T and seg.max() > 0 and np.ptp(seg) <= 1e-9 * seg.max():
            return Trajectory2D(points=pts.copy())
        keep = np.concatenate([[True], seg > 0])
        pts = pts[keep]
        n = pts.shape[0]
        if n < 2:
            return Trajectory2D(points=np.repeat(raw.points[:1], T, axis=0))
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        total = arc[-1]
        end = pts[-1]
        if T == 2:
            out = np.stack([pts[0], end])
        else:
            # root of |end - anchor_after(T-2 marches)(r)| - r = 0: the final
            # chord then lands exactly on the endpoint
            lo, hi = 0.0, total
            for _ in range(80):
                r = 0.5 * (lo + hi)
                _, anchor = _march_equal_chords(pts, arc, r, T - 2)
                if np.linalg.norm(end - anchor) - r > 0.0:
                    lo = r
                else:
                    hi = r
            positions, _ = _march_equal_chords(pts, arc, hi, T - 2)
            out = np.empty((T, 2))
            out[0] = pts[0]
            out[-1] = end
            params = arc / total
            out[1:-1] = _interp_at(pts, params, np.clip(positions / total, 0.0, 1.0))
    elif mode == "density":
        params = np.arange(n, dtype=np.float64)
        targets = np.linspace(0.0, float(n - 1), T)
        out = _interp_at(pts, params, targets)
    else:
        raise ValueError(f"unknown resampling mode: {mode!r}")
    out[0] = raw.points[0]
    out[-1] = raw.points[-1]
    return Trajectory2D(points=out)


# -- clip file format -----------------------------------------------------------
# One clip per JSON object; field names are pinned in docs/interface.md.


def clip_to_record(m: MotionSequence) -> dict:
    return {
        "version": CLIP_FORMAT_VERSION,
        "fps": m.fps,
        "skeleton": SKELETON_ID,
        "frames": m.frames,
        "root_xz": m.root_xz.tolist(),
        "root_yaw": m.root_yaw.tolist(),
        "local_pose": m.local_pose.tolist(),
        "caption": list(m.caption),
    }


def clip_from_record(rec: dict) -> MotionSequence:
    if rec.get("version") != CLIP_FORMAT_VERSION:
        raise ValueError(f"unsupported clip version {rec.get('version')}")
    if rec.get("skeleton") != SKELETON_ID:
        raise ValueError(f"unknown skeleton id {rec.get('skeleton')}")
    m = MotionSequence(
        fps=float(rec["fps"]),
        root_xz=np.asarray(rec["root_xz"]),
        root_yaw=np.asarray(rec["root_yaw"]),
        local_pose=np.asarray(rec["local_pose"]),
        caption=[str(t) for t in rec["caption"]],
    )
    if m.frames != int(rec["frames"]):
        raise ValueError("frame count field disagrees with data")
    return m


def save_clips(path, clips: list[MotionSequence]) -> None:
    """JSON-lines file of clip records."""
    with open(path, "w") as fh:
        for m in clips:
            fh.write(json.dumps(clip_to_record(m), sort_keys=True))
            fh.write("\n")


def load_clips(path) -> list[MotionSequence]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(clip_from_record(json.loads(line)))
    return out
