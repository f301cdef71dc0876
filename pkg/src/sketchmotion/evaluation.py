"""Evaluation protocol: metric reports, perturbation and PCA experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tensor, no_grad
from .codec import StickmanCodec
from .contrastive import ToyContrastiveModel
from .diffusion import NoiseSchedule, ddim_ladder
from .guidance import FeatureStats, GuidanceConfig, trajectory_target
from .metrics import diversity, fid_like, perturb_features, sti_sim, traj_err
from .model import ConditionSet, DrawCondition, MotionModel, features_to_motion
from .motion import FPS, MotionSequence, Trajectory2D
from .sampler import SamplerSettings, clamped_ddim_step, ifg_sample, sample_motion
from .sga import NOISELESS_STYLE, generate_stickman

REPORT_VERSION = 1
ANCHOR_COUNT = 3  # stickmen at the beginning, middle, and end of each clip


@dataclass
class MetricReport:
    """Mean/std per metric over repeated evaluation seeds."""

    metrics: dict[str, dict[str, float]]   # name -> {mean, std}
    seeds: list[int]
    clip_count: int
    labels: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"version": REPORT_VERSION, "metrics": self.metrics,
                           "seeds": self.seeds, "clip_count": self.clip_count,
                           "labels": self.labels}, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "MetricReport":
        rec = json.loads(text)
        if rec.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {rec.get('version')}")
        return MetricReport(metrics=rec["metrics"], seeds=list(rec["seeds"]),
                            clip_count=int(rec["clip_count"]),
                            labels=dict(rec.get("labels", {})))

    def summary_table(self) -> str:
        rows = [f"{'metric':<24} {'mean':>12} {'std':>12}"]
        for name in sorted(self.metrics):
            m = self.metrics[name]
            label = f"  [{self.labels[name]}]" if name in self.labels else ""
            rows.append(f"{name:<24} {m['mean']:>12.4f} {m['std']:>12.4f}{label}")
        rows.append(f"clips={self.clip_count} seeds={self.seeds}")
        return "\n".join(rows)


def eval_condition(clip: MotionSequence, codec_seed: int = 0) -> ConditionSet:
    """Protocol condition: caption + GT trajectory + three noiseless stickmen."""
    frames = [0, clip.frames // 2, clip.frames - 1]
    stickmen = [(f, generate_stickman(clip.local_pose[f], NOISELESS_STYLE,
                                      seed=codec_seed + f)) for f in frames]
    draw = DrawCondition(trajectory=Trajectory2D(points=clip.root_xz.copy()),
                         stickmen=stickmen)
    return ConditionSet(text=list(clip.caption), draw=draw)


def evaluate(model: MotionModel, test_set: list[tuple[MotionSequence, list[str]]],
             codec: StickmanCodec, contrastive: ToyContrastiveModel,
             sched: NoiseSchedule, seeds: list[int] | None = None,
             guidance: GuidanceConfig | None = None,
             stats: FeatureStats | None = None,
             settings: SamplerSettings | None = None) -> MetricReport:
    """Generate over the test set and score the four headline metrics.

    With a GuidanceConfig (its target/mask are filled per clip from the GT
    trajectory), sampling runs guided; otherwise plain. Metrics are averaged
    over clips for each seed, then reported mean +/- std across seeds.
    """
    seeds = seeds or [101, 102, 103, 104, 105]
    settings = settings or SamplerSettings()
    real_feats = contrastive.motion_features([c for c, _ in test_set])
    per_seed: dict[str, list[float]] = {"traj_err": [], "sti_sim": [],
                                        "fid_like": [], "diversity": []}
    for seed in seeds:
        gens: list[MotionSequence] = []
        errs, sims = [], []
        for ci, (clip, _) in enumerate(test_set):
            cond = eval_condition(clip)
            if guidance is not None:
                if stats is None:
                    raise ValueError("guided evaluation needs feature stats")
                target, mask = trajectory_target(clip.root_xz, model.config.motion_dim)
                cfg = replace(guidance, target=target, target_mask=mask)
                gen, _ = ifg_sample(model, cond, cfg, stats, sched,
                                    seed=seed * 10007 + ci, settings=settings)
            else:
                gen = sample_motion(model, cond, clip.frames, sched,
                                    seed=seed * 10007 + ci, settings=settings)
            gens.append(gen)
            errs.append(traj_err(gen, cond.draw.trajectory))
            sims.extend(sti_sim(gen.local_pose[f], sketch, codec)
                        for f, sketch in cond.draw.stickmen)
        gen_feats = contrastive.motion_features(gens)
        per_seed["traj_err"].append(float(np.mean(errs)))
        per_seed["sti_sim"].append(float(np.mean(sims)))
        per_seed["fid_like"].append(fid_like(real_feats, gen_feats))
        per_seed["diversity"].append(diversity(gen_feats,
                                               pair_count=len(gens) // 2, seed=seed))
    metrics = {k: {"mean": float(np.mean(v)), "std": float(np.std(v))}
               for k, v in per_seed.items()}
    return MetricReport(metrics=metrics, seeds=seeds, clip_count=len(test_set),
                        labels={"traj_err": "mean planar distance, meters",
                                "sti_sim": "percent", "fid_like": "toy features",
                                "diversity": "toy features"})


# -- batched generation with feature injection (perturbation protocol) -----------


def sample_batch_features(model: MotionModel, conds: list[ConditionSet], length: int,
                          sched: NoiseSchedule, seed: int, stride: int = 20,
                          inject=None) -> np.ndarray:
    """Fully-conditioned batched reverse process (no mixture), for experiments.

    Every sample routes through the (text,draw) segment; `inject` can rewrite
    features mid-network (see MotionModel.forward_encoded). Returns normalized
    x0 features, shape (B, T, motion_dim).
    """
    rng = np.random.default_rng(seed)
    B = len(conds)
    x = rng.standard_normal((B, length, model.config.motion_dim))
    with no_grad():
        enc = model.encode_batch(x, np.full(B, sched.T_steps), conds,
                                 [(True, True)] * B)
        for t in ddim_ladder(sched.T_steps, stride):
            t_prev = max(t - stride, 0)
            enc = replace(enc, x_t=x, t_steps=np.full(B, t))
            eps, _ = model.forward_encoded(enc, inject=inject)
            x = clamped_ddim_step(x, t, t_prev, eps.data, sched)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError(f"non-finite state at ladder step t={t}")
    return x


def perturbation_experiment(model: MotionModel,
                            lambdas: list[float], site: str,
                            conds: list[ConditionSet], length: int,
                            contrastive: ToyContrastiveModel,
                            real_feats: np.ndarray, sched: NoiseSchedule,
                            seed: int = 0, stride: int = 20) -> dict[float, float]:
    """Distance score per interpolation factor with batch-shuffle injection.

    site "mcm_fusion" rewrites the last block's condition-fusion output;
    site "final_layer" rewrites the input of the output head. Each sample's
    (T, E) feature map is flattened to one row for the batch shuffle.
    """
    if site not in ("mcm_fusion", "final_layer"):
        raise ValueError("site must be 'mcm_fusion' or 'final_layer'")
    out: dict[float, float] = {}
    last = model.config.layers
    for lam in lambdas:
        inject_rng = np.random.default_rng(seed + 7777)

        def inject(layer_idx, kind, h):
            want = ("fusion" if site == "mcm_fusion" else "final")
            if kind != want or layer_idx != last:
                return None
            B = h.shape[0]
            rows = h.data.reshape(B, -1)
            perm = inject_rng.permutation(B)
            mixed = perturb_features(rows, lam, seed=0, permutation=perm)
            return Tensor(mixed.reshape(h.shape))

        feats = sample_batch_features(model, conds, length, sched, seed=seed,
                                      stride=stride, inject=inject)
        motions = [features_to_motion(model.normalizer.denormalize(f), FPS)
                   for f in feats]
        gen_feats = contrastive.motion_features(motions)
        out[lam] = fid_like(real_feats, gen_feats)
    return out


def collect_fusion_rows(model: MotionModel, conds: list[ConditionSet], length: int,
                        layer_index: int, sched: NoiseSchedule, seed: int = 0,
                        stride: int = 20, max_rows_per_seg: int = 20000
                        ) -> dict[tuple[bool, bool], np.ndarray]:
    """Per-token fusion rows by condition setting from unguided sampling runs."""
    rows: dict[tuple[bool, bool], list[np.ndarray]] = {}

    def hook(t, seg, F):
        rows.setdefault(seg, []).append(F)

    for i, cond in enumerate(conds):
        sample_motion(model, cond, length, sched, seed=seed + i,
                      capture_layer=layer_index, capture_hook=hook)
    out = {}
    for seg, chunks in rows.items():
        mat = np.concatenate(chunks, axis=0)
        out[seg] = mat[:max_rows_per_seg]
    return out
