"""Deterministic reverse-process sampling with condition mixing and guidance.

Each ladder step evaluates the model under all four condition settings
(payloads the request lacks encode to learned nulls), mixes the four noise
predictions with the two-stage weight schedule, and advances with a DDIM
step. The guided variant splits the model at one block's condition fusion:
the (text,draw) path's fused features are optimized by SGD against the
spatial target (with Mahalanobis clipping) before that path's noise
prediction is produced, and the other three paths stay untouched. With
repeat=0 the guided sampler is bit-identical to the plain one because both
run the same split computation for the (text,draw) path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, no_grad
from .diffusion import (DEFAULT_STRIDE, NoiseSchedule, ddim_ladder, mix_noise,
                        mixture_weights)
from .guidance import (FeatureStats, GuidanceConfig, GuidanceTrace,
                       guidance_loss, mahalanobis, md_clip)
from .model import SEGMENTS, ConditionSet, EncodedBatch, MotionModel, features_to_motion
from .motion import FPS, MotionSequence
from .training import predict_x0_graph

DEFAULT_W = 2.5
DEFAULT_P_DRAW = 0.2

# Normalized features are z-scored, so honest states/estimates live within a
# few sigma. The strong mixture weights (w4 = 1-2w) extrapolate between the
# four predictions; on a desk-scale model the disagreement can feed back
# through the ladder and diverge, so the loop thresholds the clean-data
# estimate and clips the state to a generous sigma envelope that healthy
# dynamics never touch.
X0_CLAMP = 6.0
STATE_CLAMP = 8.0


@dataclass
class SamplerSettings:
    stride: int = DEFAULT_STRIDE
    w: float = DEFAULT_W
    p_draw: float = DEFAULT_P_DRAW
    fps: float = FPS


def clamped_ddim_step(x: np.ndarray, t: int, t_prev: int, eps_hat: np.ndarray,
                      sched: NoiseSchedule) -> np.ndarray:
    """DDIM advance with clean-estimate thresholding and a state clip."""
    from .diffusion import predict_x0
    x0_hat = np.clip(predict_x0(x, t, eps_hat, sched), -X0_CLAMP, X0_CLAMP)
    ab_prev = sched.abar(t_prev)
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    return np.clip(out, -STATE_CLAMP, STATE_CLAMP)


def _rebind(enc: EncodedBatch, x_t: np.ndarray, t: int) -> EncodedBatch:
    return replace(enc, x_t=x_t[None], t_steps=np.array([t]))


def _normalize_guidance(model: MotionModel, config: GuidanceConfig,
                        T: int) -> tuple[np.ndarray, np.ndarray]:
    if config.target is None or config.target_mask is None:
        raise ValueError("guidance requires a spatial target and mask")
    target = np.asarray(config.target, dtype=np.float64)
    mask = np.asarray(config.target_mask, dtype=np.float64)
    if target.shape != (T, model.config.motion_dim) or mask.shape != target.shape:
        raise ValueError("target/mask must be (T, motion_dim)")
    return model.normalizer.normalize(target), mask


def _reverse_loop(model: MotionModel, cond: ConditionSet, length: int,
                  sched: NoiseSchedule, seed: int, settings: SamplerSettings,
                  config: GuidanceConfig | None = None,
                  stats: FeatureStats | None = None,
                  capture_layer: int | None = None, capture_hook=None,
                  inject=None) -> tuple[np.ndarray, GuidanceTrace | None]:
    """Run the ladder; returns (normalized x0 features, guidance trace)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((length, model.config.motion_dim))
    guided = config is not None
    if guided and stats is None:
        raise ValueError("guided sampling needs feature statistics")
    split_layer = config.layer_index if guided else capture_layer
    if guided and not 1 <= config.layer_index <= model.config.layers:
        raise ValueError("guidance layer_index out of range")

    with no_grad():
        encs = {seg: model.encode_batch(x[None], np.array([sched.T_steps]),
                                        [cond], [seg]) for seg in SEGMENTS}
    if guided:
        target, mask = _normalize_guidance(model, config, length)
    trace = GuidanceTrace() if guided else None

    ladder = ddim_ladder(sched.T_steps, settings.stride)
    for t in ladder:
        t_prev = max(t - settings.stride, 0)
        weights = mixture_weights(t, sched.T_steps, settings.w, settings.p_draw, rng)
        eps_by_seg = {}
        for seg in SEGMENTS:
            enc = _rebind(encs[seg], x, t)
            guide_this = guided and seg == (True, True)
            if split_layer is not None and (guide_this or capture_hook is not None):
                with no_grad():
                    fused = model.forward_until(enc, split_layer)
                f_orig = fused.data[0]
                if capture_hook is not None:
                    capture_hook(t, seg, f_orig)
                f_bar = f_orig
                if guide_this and config.repeat > 0:
                    f_bar, step_losses, clips, skipped = _sgd_on_features(
                        model, enc, f_orig, t, x, target, mask, config, stats, sched)
                    trace.step_losses.append(step_losses)
                    trace.clip_counts.append(clips)
                    trace.skipped_nonfinite += skipped
                with no_grad():
                    eps_t = model.forward_from(Tensor(f_bar[None]), enc, split_layer)
                eps_by_seg[seg] = eps_t.data[0]
                if guide_this:
                    x0_hat = (x - np.sqrt(1.0 - sched.abar(t)) * eps_by_seg[seg]) \
                        / np.sqrt(sched.abar(t))
                    trace.final_loss = float(guidance_loss(x0_hat, target, mask))
            else:
                with no_grad():
                    eps_t, _ = model.forward_encoded(enc, inject=inject)
                eps_by_seg[seg] = eps_t.data[0]
        eps_hat = mix_noise(eps_by_seg[(True, True)], eps_by_seg[(False, True)],
                            eps_by_seg[(True, False)], eps_by_seg[(False, False)],
                            weights)
        x = clamped_ddim_step(x, t, t_prev, eps_hat, sched)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at ladder step t={t}")
    return x, trace


def _sgd_on_features(model: MotionModel, enc: EncodedBatch, f_orig: np.ndarray,
                     t: int, x: np.ndarray, target: np.ndarray, mask: np.ndarray,
                     config: GuidanceConfig, stats: FeatureStats,
                     sched: NoiseSchedule) -> tuple[np.ndarray, list[float], int, int]:
    """Plain SGD on the fused features with distance clipping after each step.

    The descended objective is the noise-space form of the masked spatial
    loss: matching the clean-data estimate to the target is identical to
    matching the noise prediction to (x_t - sqrt(abar) c)/sqrt(1 - abar), and
    the noise-space form has unit scale at every ladder step, so one step
    size works on the whole ladder (the clean-estimate form amplifies
    gradients by 1/sqrt(abar), overflowing at noisy steps). Recorded losses
    stay in clean-data units.
    """
    f_bar = f_orig.copy()
    losses: list[float] = []
    clips = 0
    skipped = 0
    ab = sched.abar(t)
    eps_star = (x - np.sqrt(ab) * target) / np.sqrt(1.0 - ab)
    for _ in range(config.repeat):
        leaf = Tensor(f_bar[None], requires_grad=True)
        eps_t = model.forward_from(leaf, enc, config.layer_index)
        x0_hat = predict_x0_graph(x, t, eps_t[0], sched)
        loss = guidance_loss(x0_hat, target, mask)
        losses.append(loss.item())
        guidance_loss(eps_t[0], eps_star, mask).backward()
        grad = leaf.grad[0] if leaf.grad is not None else None
        if grad is None or not np.all(np.isfinite(grad)):
            skipped += 1
            continue
        updated = f_bar - config.lr * grad
        f_bar, fired = md_clip(f_orig, updated, stats, config.eps_md, config.clip_scale)
        clips += int(fired)
    return f_bar, losses, clips, skipped


def sample_motion(model: MotionModel, cond: ConditionSet, length: int,
                  sched: NoiseSchedule, seed: int,
                  settings: SamplerSettings | None = None,
                  capture_layer: int | None = None, capture_hook=None,
                  caption: list[str] | None = None) -> MotionSequence:
    """Unguided conditioned sample; deterministic given the seed."""
    settings = settings or SamplerSettings()
    feats, _ = _reverse_loop(model, cond, length, sched, seed, settings,
                             capture_layer=capture_layer, capture_hook=capture_hook)
    return features_to_motion(model.normalizer.denormalize(feats), settings.fps,
                              caption if caption is not None else (cond.text or []))


def ifg_sample(model: MotionModel, cond: ConditionSet, config: GuidanceConfig,
               stats: FeatureStats, sched: NoiseSchedule, seed: int,
               settings: SamplerSettings | None = None,
               caption: list[str] | None = None) -> tuple[MotionSequence, GuidanceTrace]:
    """Guided sample: SGD on one block's fused features per ladder step."""
    settings = settings or SamplerSettings()
    feats, trace = _reverse_loop(model, cond, length=_target_length(config),
                                 sched=sched, seed=seed, settings=settings,
                                 config=config, stats=stats)
    motion = features_to_motion(model.normalizer.denormalize(feats), settings.fps,
                                caption if caption is not None else (cond.text or []))
    return motion, trace


def _target_length(config: GuidanceConfig) -> int:
    if config.target is None:
        raise ValueError("guidance requires a spatial target")
    return int(np.asarray(config.target).shape[0])


def sample_features(model: MotionModel, cond: ConditionSet, length: int,
                    sched: NoiseSchedule, seed: int,
                    settings: SamplerSettings | None = None,
                    inject=None) -> np.ndarray:
    """Normalized x0 features from an unguided run (hook point for experiments)."""
    settings = settings or SamplerSettings()
    feats, _ = _reverse_loop(model, cond, length, sched, seed, settings, inject=inject)
    return feats


def estimate_feature_stats(model: MotionModel, eval_conds: list[ConditionSet],
                           layer_index: int, length: int, sched: NoiseSchedule,
                           seed: int = 0, settings: SamplerSettings | None = None):
    """Streaming per-token stats of the (text,draw) path's fusion output.

    Rows are collected at every ladder step of unguided sampling runs over
    `eval_conds`; partial statistics merge exactly (see StreamingStats).
    """
    from .guidance import StreamingStats

    acc = StreamingStats(model.config.dim)

    def hook(t, seg, F):
        if seg == (True, True):
            acc.update(F)

    for i, cond in enumerate(eval_conds):
        sample_motion(model, cond, length, sched, seed=seed + i, settings=settings,
                      capture_layer=layer_index, capture_hook=hook)
    return acc.finalize()
