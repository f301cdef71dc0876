"""Pretrain the stickman autoencoder and inspect its candidate poses.

    python demos/03_codec_pretraining.py

The decoder emits several pose hypotheses per sketch; the best-of-N loss
keeps ambiguous readings (e.g. which leg is forward) alive instead of
averaging them away.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sketchmotion.codec import best_candidate_rmse, make_codec_pairs, pretrain_codec
from sketchmotion.dataset import DatasetConfig, generate_synthetic_dataset
from sketchmotion.sga import NOISELESS_STYLE, generate_stickman
from sketchmotion.skeleton import TOY_SKELETON, pose_from_offsets

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

train = generate_synthetic_dataset(DatasetConfig(seed=11, sample_count=96))
held_out = generate_synthetic_dataset(DatasetConfig(seed=12, sample_count=8))

pairs = make_codec_pairs(train, per_clip=4, seed=21)
codec, history = pretrain_codec(pairs, epochs=15, seed=22, log_every=5)
print(f"loss {history['initial']:.3f} -> {history['epochs'][-1]:.3f}")

rmses = [best_candidate_rmse(codec, clip.local_pose[f],
                             generate_stickman(clip.local_pose[f], NOISELESS_STYLE,
                                               seed=f))
         for clip, _ in held_out for f in (0, clip.frames // 2)]
print(f"held-out best-candidate limb RMSE: {np.mean(rmses):.3f} m")

# visualize candidates for one walking frame
clip, _ = held_out[0]
pose = clip.local_pose[clip.frames // 3]
sketch = generate_stickman(pose, NOISELESS_STYLE, seed=5)
cands = codec.decode(codec.encode(sketch))

fig, axes = plt.subplots(1, min(4, len(cands)) + 1, figsize=(16, 4))
for stroke in sketch.strokes:
    axes[0].plot(stroke.points[:, 0], stroke.points[:, 1], "k-")
axes[0].set_title("input sketch")
axes[0].set_aspect("equal")
for ax, cand in zip(axes[1:], cands):
    rec = pose_from_offsets(cand)
    for j in range(1, TOY_SKELETON.joint_count):
        p = TOY_SKELETON.parent[j]
        ax.plot([rec[p, 0], rec[j, 0]], [rec[p, 1], rec[j, 1]], "b-")
    ax.set_aspect("equal")
    ax.set_title("candidate pose")
fig.savefig(out / "codec_candidates.png", dpi=120)
print(f"wrote {out / 'codec_candidates.png'}")
