"""Synthesize hand-drawn-style stickmen from 3-D poses.

    python demos/02_stickman_generation.py

Shows the three perturbation knobs (stroke jitter, misplacement, scaling)
at increasing strength, plus the resampling of a drawn trajectory.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sketchmotion.dataset import DatasetConfig, generate_synthetic_dataset
from sketchmotion.motion import Trajectory2D, resample_trajectory
from sketchmotion.sga import SgaStyle, generate_stickman

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

clip, _ = generate_synthetic_dataset(DatasetConfig(seed=3, sample_count=1))[0]
pose = clip.local_pose[clip.frames // 2]

styles = [
    ("clean", SgaStyle(jitter_sigma=0.0, misplace_sigma=0.0, scale_range=(1, 1))),
    ("default", SgaStyle()),
    ("sloppy", SgaStyle(jitter_sigma=0.025, misplace_sigma=0.08,
                        scale_range=(0.7, 1.3))),
]

fig, axes = plt.subplots(1, len(styles) * 2, figsize=(4 * len(styles) * 2, 4))
for i, (name, style) in enumerate(styles):
    for k in range(2):
        ax = axes[2 * i + k]
        sketch = generate_stickman(pose, style, seed=10 * i + k)
        for stroke in sketch.strokes:
            ax.plot(stroke.points[:, 0], stroke.points[:, 1], "k-", lw=2)
        ax.set_xlim(-1, 1); ax.set_ylim(-1, 1)
        ax.set_aspect("equal")
        ax.set_title(f"{name} (seed {10 * i + k})", fontsize=9)
fig.savefig(out / "stickmen.png", dpi=120)
print(f"wrote {out / 'stickmen.png'}")

# Resampling a drawn path: uniform ignores pen speed, density keeps it.
# The raw stroke below is dense at the start (slow pen) and sparse later.
u = np.concatenate([np.linspace(0, 0.5, 80), np.linspace(0.51, 1.0, 12)])
raw = Trajectory2D(points=np.stack([3 * u, np.sin(4 * u)], axis=1))
fig, axes = plt.subplots(1, 2, figsize=(12, 4))
for ax, mode in zip(axes, ("uniform", "density")):
    res = resample_trajectory(raw, 40, mode)
    ax.plot(raw.points[:, 0], raw.points[:, 1], "-", color="#ccc")
    ax.plot(res.points[:, 0], res.points[:, 1], "o", ms=4)
    ax.set_title(f"{mode} resampling to 40 points")
fig.savefig(out / "resampling.png", dpi=120)
print(f"wrote {out / 'resampling.png'}")
