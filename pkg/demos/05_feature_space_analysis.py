"""Feature-space diagnostics on a trained model: PCA intrinsic dimension per
condition setting, batch-shuffle perturbation at two injection sites, and the
attention-cost comparison. Reuses the cached test bundle if present.

    python demos/05_feature_space_analysis.py
"""

from pathlib import Path

import numpy as np

from sketchmotion.evaluation import collect_fusion_rows, eval_condition, \
    perturbation_experiment
from sketchmotion.metrics import masked_attention_baseline_flops, pca_intrinsic_dim

BUNDLE = Path(__file__).parent.parent / ".cache" / "test_bundle"

if not (BUNDLE / "model.npz").exists():
    raise SystemExit("train the toy bundle first: pytest tests/test_acceptance.py -s")

import json

from sketchmotion.codec import load_codec
from sketchmotion.contrastive import load_contrastive
from sketchmotion.dataset import DatasetConfig, generate_synthetic_dataset
from sketchmotion.diffusion import build_schedule
from sketchmotion.model import load_model

codec = load_codec(BUNDLE / "codec.npz")
model = load_model(BUNDLE / "model.npz", codec)
model.set_requires_grad(False)
contrastive = load_contrastive(BUNDLE / "contrastive.npz")
sched = build_schedule()
test = generate_synthetic_dataset(DatasetConfig(seed=12, sample_count=40))
conds = [eval_condition(c) for c, _ in test[:6]]

rows = collect_fusion_rows(model, conds, 60, 3, sched, seed=1)
print("intrinsic dimension of fusion features (99.9% variance):")
names = {(True, True): "text+draw", (True, False): "text only",
         (False, True): "draw only", (False, False): "unconditioned"}
for seg, mat in sorted(rows.items(), reverse=True):
    print(f"  {names[seg]:>14}: {pca_intrinsic_dim(mat, 0.999):3d}"
          f"  ({mat.shape[0]} rows)")

real_feats = contrastive.motion_features([c for c, _ in test])
conds36 = [eval_condition(c) for c, _ in test[:36]]
for site in ("mcm_fusion", "final_layer"):
    res = perturbation_experiment(model, [0.0, 0.1, 0.3], site, conds36, 60,
                                  contrastive, real_feats, sched, seed=2)
    pretty = {k: round(v, 3) for k, v in res.items()}
    print(f"feature-shuffle distance at {site}: {pretty}")

mcm, masked = masked_attention_baseline_flops(60, 16, 64)
print(f"fusion multiply-adds per sample: routed {mcm:.3e} vs masked {masked:.3e} "
      f"({100 * mcm / masked:.0f}%)")
