"""Train the conditioned denoiser at toy scale, then sample with and without
trajectory guidance. Expect roughly 10-20 minutes on a desktop CPU.

    python demos/04_train_and_sample.py

The same artifacts can be produced step by step with the CLI:

    sketchmotion gen-data --seed 11 --count 256 --out data.jsonl
    sketchmotion train-codec --data data.jsonl --out codec.npz
    sketchmotion train-model --data data.jsonl --codec codec.npz --out model.npz
    sketchmotion estimate-stats --data data.jsonl --codec codec.npz \
        --model model.npz --layer 3 --out stats.npz
    sketchmotion sample --model model.npz --codec codec.npz --stats stats.npz \
        --trajectory traj.json --out clip.json
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sketchmotion.codec import make_codec_pairs, pretrain_codec
from sketchmotion.dataset import DatasetConfig, generate_synthetic_dataset
from sketchmotion.diffusion import build_schedule
from sketchmotion.evaluation import eval_condition
from sketchmotion.guidance import GuidanceConfig, trajectory_target
from sketchmotion.metrics import traj_err
from sketchmotion.sampler import estimate_feature_stats, ifg_sample, sample_motion
from sketchmotion.training import train_model

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

cfg = DatasetConfig(seed=11, sample_count=256)
train = generate_synthetic_dataset(cfg)
test = generate_synthetic_dataset(DatasetConfig(seed=12, sample_count=4))
sched = build_schedule()

pairs = make_codec_pairs(train, per_clip=4, seed=21)
codec, _ = pretrain_codec(pairs, epochs=20, seed=22)
model, history = train_model(train, epochs=90, seed=41, codec=codec,
                             data_config=cfg, log_every=100)
model.set_requires_grad(False)

conds = [eval_condition(c) for c, _ in test]
stats = estimate_feature_stats(model, conds[:4], 3, cfg.T, sched, seed=51)

fig, axes = plt.subplots(1, len(test), figsize=(5 * len(test), 5))
for ax, (clip, caption) in zip(axes, test):
    cond = eval_condition(clip)
    plain = sample_motion(model, cond, clip.frames, sched, seed=99)
    target, mask = trajectory_target(clip.root_xz, model.config.motion_dim)
    guided, trace = ifg_sample(model, cond,
                               GuidanceConfig(target=target, target_mask=mask),
                               stats, sched, seed=99)
    ax.plot(clip.root_xz[:, 0], clip.root_xz[:, 1], "k-", label="target")
    ax.plot(plain.root_xz[:, 0], plain.root_xz[:, 1], "--", label="unguided")
    ax.plot(guided.root_xz[:, 0], guided.root_xz[:, 1], "-", label="guided")
    ax.set_title(f"err {traj_err(plain, cond.draw.trajectory):.2f} -> "
                 f"{traj_err(guided, cond.draw.trajectory):.2f} m "
                 f"(loss {trace.final_loss:.3f})", fontsize=9)
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
fig.suptitle("trajectory guidance on held-out clips")
fig.savefig(out / "guidance.png", dpi=120)
print(f"wrote {out / 'guidance.png'}")
