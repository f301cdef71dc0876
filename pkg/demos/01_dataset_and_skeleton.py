"""Generate the synthetic motion dataset and look at what is inside it.

Run from the repo root:

    python demos/01_dataset_and_skeleton.py

Writes plots to demos/output/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sketchmotion.dataset import FAMILIES, DatasetConfig, generate_synthetic_dataset
from sketchmotion.motion import extract_pose, extract_trajectory
from sketchmotion.skeleton import TOY_SKELETON, check_bone_lengths

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# One clip per family. Everything is a pure function of the config seed:
# rerunning this script reproduces the exact same arrays.
config = DatasetConfig(seed=7, sample_count=len(FAMILIES))
dataset = generate_synthetic_dataset(config)

fig, axes = plt.subplots(2, 4, figsize=(16, 8))
for ax, (clip, caption) in zip(axes.ravel(), dataset):
    path = extract_trajectory(clip).points
    ax.plot(path[:, 0], path[:, 1], "-o", markersize=2)
    ax.set_title(" ".join(caption[:5]), fontsize=9)
    ax.set_aspect("equal")
fig.suptitle("root trajectories, one clip per motion family")
fig.savefig(out / "trajectories.png", dpi=120)
print(f"wrote {out / 'trajectories.png'}")

# Poses are built by forward kinematics, so bone lengths are exact.
clip, caption = dataset[0]
pose = extract_pose(clip, clip.frames // 2)
print("caption:", " ".join(caption))
print("pelvis is the origin:", np.allclose(pose[0], 0.0))
print("bone lengths exact:", check_bone_lengths(pose))

fig, ax = plt.subplots(figsize=(4, 6))
for j in range(1, TOY_SKELETON.joint_count):
    p = TOY_SKELETON.parent[j]
    ax.plot([pose[p, 0], pose[j, 0]], [pose[p, 1], pose[j, 1]], "b-")
ax.set_aspect("equal")
ax.set_title("frontal view of one frame")
fig.savefig(out / "pose.png", dpi=120)
print(f"wrote {out / 'pose.png'}")
