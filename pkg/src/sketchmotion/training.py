"""Denoising training with condition dropout and auxiliary spatial losses."""

from __future__ import annotations

import numpy as np

from . import nn
from .autodiff import Tensor, no_grad
from .codec import StickmanCodec
from .dataset import DatasetConfig
from .diffusion import NoiseSchedule, build_schedule
from .model import (MOTION_DIM, POSE_CHANNELS, TRAJ_CHANNELS, ConditionSet,
                    DrawCondition, FeatureNormalizer, ModelConfig, MotionModel,
                    motion_to_features)
from .motion import MotionSequence, Trajectory2D
from .sga import generate_stickman, random_style

KEEP_PROB = 0.7          # each condition stays active with this probability
MAX_STICKMEN = 7
DIVERGENCE_LIMIT = 1e3
WARMUP_STEPS = 100
TRAJ_WEIGHT = 6.0        # noise-space trajectory supervision, draw-active samples
STICK_WEIGHT = 1.0       # noise-space pose supervision at anchored frames


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def predict_x0_graph(x_t: np.ndarray, t: int, eps_pred: Tensor,
                     sched: NoiseSchedule) -> Tensor:
    """Differentiable clean-data estimate from a predicted-noise tensor."""
    ab = sched.abar(t)
    return (Tensor(x_t) - eps_pred * np.sqrt(1.0 - ab)) * (1.0 / np.sqrt(ab))


def spatial_loss_terms(pred_by_condition: dict[tuple[bool, bool], Tensor | np.ndarray],
                       gt: np.ndarray, mask: np.ndarray) -> dict[str, Tensor]:
    """Three supervision terms over clean-data estimates.

    traj: squared L2 between extracted trajectories, averaged over the
    draw-active settings present in `pred_by_condition`.
    stick: mask-selected per-frame pose squared error, normalized by the mask
    count (0 when the mask is empty), averaged over draw-active settings.
    motion: full squared error summed over frames, averaged over all settings.
    """
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    draw_preds = [p for (_, use_draw), p in pred_by_condition.items() if use_draw]
    zero = Tensor(0.0)

    l_traj, l_stick = zero, zero
    if draw_preds:
        M = float(mask.sum())
        for p in draw_preds:
            p = _as_tensor(p)
            dt = p[:, TRAJ_CHANNELS] - gt[:, TRAJ_CHANNELS]
            l_traj = l_traj + (dt * dt).sum()
            if M > 0:
                dp = p[:, POSE_CHANNELS] - gt[:, POSE_CHANNELS]
                l_stick = l_stick + ((dp * dp).sum(axis=1) * mask).sum() * (1.0 / M)
        l_traj = l_traj * (1.0 / len(draw_preds))
        l_stick = l_stick * (1.0 / len(draw_preds))

    l_motion = zero
    for p in pred_by_condition.values():
        p = _as_tensor(p)
        dm = p - gt
        l_motion = l_motion + (dm * dm).sum()
    l_motion = l_motion * (1.0 / len(pred_by_condition))
    return {"traj": l_traj, "stick": l_stick, "motion": l_motion}


def training_losses(pred_by_condition: dict[tuple[bool, bool], Tensor | np.ndarray],
                    gt: np.ndarray, mask: np.ndarray) -> Tensor:
    """Sum of the trajectory, stickman, and motion supervision terms."""
    terms = spatial_loss_terms(pred_by_condition, gt, mask)
    return terms["traj"] + terms["stick"] + terms["motion"]


def make_draw_condition(clip: MotionSequence, rng: np.random.Generator,
                        max_stickmen: int = MAX_STICKMEN) -> DrawCondition:
    """Ground-truth trajectory plus SGA stickmen at a random frame subset."""
    count = int(rng.integers(1, max_stickmen + 1))
    frames = sorted(rng.choice(clip.frames, size=min(count, clip.frames),
                               replace=False).tolist())
    stickmen = []
    for f in frames:
        style = random_style(rng)
        stickmen.append((int(f), generate_stickman(clip.local_pose[f], style,
                                                   int(rng.integers(0, 2**31)))))
    return DrawCondition(trajectory=Trajectory2D(points=clip.root_xz.copy()),
                         stickmen=stickmen)


def train_model(dataset: list[tuple[MotionSequence, list[str]]], epochs: int,
                seed: int, codec: StickmanCodec, *,
                data_config: DatasetConfig, batch_size: int = 16,
                lr: float = 2e-3, layers: int = 4, dim: int = 64,
                aux_weight: float = 1.0, sched: NoiseSchedule | None = None,
                snapshot_hook=None, snapshot_every: int = 0,
                snapshot_at: tuple[int, ...] = (),
                log_every: int = 0) -> tuple[MotionModel, dict]:
    """Train the noise predictor; deterministic given the seed.

    Per sample: a uniform diffusion step, forward noising, independent
    condition dropout (keep probability 0.7 each), segment assignment from the
    surviving conditions, then noise MSE plus the spatial losses evaluated on
    the clean-data estimate. The spatial losses are scaled per element and by
    abar(t) so late (noise-dominated) steps do not drown the noise objective.
    """
    if not codec.frozen:
        raise ValueError("codec encoder must be pretrained and frozen")
    sched = sched or build_schedule()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 77]))

    feats = np.stack([motion_to_features(clip) for clip, _ in dataset])
    normalizer = FeatureNormalizer.fit(feats)
    norm_feats = normalizer.normalize(feats)

    config = ModelConfig(layers=layers, dim=dim, motion_dim=MOTION_DIM,
                         vocab=tuple(data_config.vocabulary))
    model = MotionModel(config, codec, seed=seed, normalizer=normalizer)
    params = model.named_params()
    opt = nn.Adam(params, lr=lr)

    n = len(dataset)
    T = feats.shape[1]
    history = {"steps": [], "loss": [], "eps_mse": []}
    step = 0
    total_steps = max(1, epochs * ((n + batch_size - 1) // batch_size))
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch_size):
            sel = order[s:s + batch_size]
            x_t = np.empty((sel.size, T, MOTION_DIM))
            t_steps = np.empty(sel.size, dtype=np.int64)
            eps_gt = np.empty_like(x_t)
            conds, masks = [], []
            for bi, di in enumerate(sel):
                clip, caption = dataset[di]
                t = int(rng.integers(1, sched.T_steps + 1))
                eps = rng.standard_normal((T, MOTION_DIM))
                ab = sched.abar(t)
                x_t[bi] = np.sqrt(ab) * norm_feats[di] + np.sqrt(1.0 - ab) * eps
                t_steps[bi] = t
                eps_gt[bi] = eps
                keep_text = rng.random() < KEEP_PROB
                keep_draw = rng.random() < KEEP_PROB
                draw = make_draw_condition(clip, rng) if keep_draw else None
                text = list(caption)[:config.max_text_len] if keep_text else None
                conds.append(ConditionSet(text=text, draw=draw))
                masks.append(draw.presence_mask() if draw else np.zeros(T))

            opt.zero_grad()
            enc = model.encode_batch(x_t, t_steps, conds)
            eps_pred, _ = model.forward_encoded(enc)
            diff = eps_pred - eps_gt
            eps_mse = (diff * diff).mean()
            # Trajectory/stickman supervision in noise space: matching the
            # clean-data estimate to the condition equals matching the noise
            # prediction to (x_t - sqrt(abar) gt)/sqrt(1-abar), term by term,
            # and the noise-space form keeps unit scale at every step. The
            # trajectory spans only 2 of the feature channels, so it gets an
            # explicit weight on draw-active samples.
            aux = Tensor(0.0)
            for bi in range(sel.size):
                _, use_draw = enc.segments[bi]
                if not use_draw:
                    continue
                ab = sched.abar(int(t_steps[bi]))
                eps_star = (x_t[bi] - np.sqrt(ab) * norm_feats[sel[bi]]) \
                    / np.sqrt(1.0 - ab)
                dt = eps_pred[bi, :, TRAJ_CHANNELS] - eps_star[:, TRAJ_CHANNELS]
                aux = aux + (dt * dt).mean() * TRAJ_WEIGHT
                m = masks[bi].astype(bool)
                if m.any():
                    rows = np.nonzero(m)[0]
                    dp = eps_pred[bi][rows][:, POSE_CHANNELS] \
                        - eps_star[rows][:, POSE_CHANNELS]
                    aux = aux + (dp * dp).mean() * STICK_WEIGHT
            loss = eps_mse + aux * (aux_weight / sel.size)
            value = loss.item()
            if not np.isfinite(value) or (step > WARMUP_STEPS and value > DIVERGENCE_LIMIT):
                raise FloatingPointError(f"training diverged at step {step}: loss={value}")
            loss.backward()
            # cosine decay to 20% of the base rate over the run
            opt.lr = lr * (0.6 + 0.4 * np.cos(np.pi * min(step / total_steps, 1.0)))
            opt.step()

            history["steps"].append(step)
            history["loss"].append(value)
            history["eps_mse"].append(eps_mse.item())
            step += 1
            due = (snapshot_every and step % snapshot_every == 0) or step in snapshot_at
            if snapshot_hook is not None and due:
                with no_grad():
                    snapshot_hook(step, model)
            if log_every and step % log_every == 0:
                print(f"step {step}: loss {value:.4f} eps_mse {eps_mse.item():.4f}")
    return model, history
