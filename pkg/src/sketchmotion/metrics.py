"""Evaluation metrics, feature perturbation, PCA diagnostics, FLOP accounting."""

from __future__ import annotations

import numpy as np

from . import nn
from .autodiff import Tensor, concatenate, flop_meter, matmul, no_grad, softmax
from .codec import StickmanCodec, best_candidate_rmse
from .model import DrawDecoder, LatentEncoder, TextDecoder
from .motion import MotionSequence, Trajectory2D, extract_trajectory
from .sga import StickmanSketch

STISIM_RMSE_FLOOR = 0.5  # meters; RMSE at or beyond this scores 0%


def traj_err(generated: MotionSequence, target: Trajectory2D) -> float:
    """Mean per-frame planar distance (meters) between root path and target."""
    got = extract_trajectory(generated).points
    if got.shape != target.points.shape:
        raise ValueError("trajectory lengths differ")
    return float(np.linalg.norm(got - target.points, axis=1).mean())


def traj_err_threshold(generated: MotionSequence, target: Trajectory2D,
                       threshold: float = 0.5) -> float:
    """Fraction of frames whose planar error exceeds `threshold` meters."""
    got = extract_trajectory(generated).points
    if got.shape != target.points.shape:
        raise ValueError("trajectory lengths differ")
    return float((np.linalg.norm(got - target.points, axis=1) > threshold).mean())


def sti_sim(generated_pose: np.ndarray, sketch: StickmanSketch,
            codec: StickmanCodec) -> float:
    """Percent similarity between a pose and a stickman via the codec.

    Decodes the sketch to candidate poses, scores the best candidate's
    limb-offset RMSE against the generated pose, and maps it linearly to
    100% (RMSE 0) .. 0% (RMSE >= 0.5 m).
    """
    rmse = best_candidate_rmse(codec, generated_pose, sketch)
    return 100.0 * max(0.0, 1.0 - rmse / STISIM_RMSE_FLOOR)


def fid_like(real: np.ndarray, gen: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    The covariance-product square root comes from an eigendecomposition of
    sqrt(Sr) Sg sqrt(Sr); a significantly non-PSD symmetrized product raises.
    """
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    d = real.shape[1]
    if gen.shape[1] != d:
        raise ValueError("feature dimensions differ")
    if real.shape[0] <= d or gen.shape[0] <= d:
        raise ValueError("need more samples than feature dimensions")
    mu_r, mu_g = real.mean(axis=0), gen.mean(axis=0)
    cov_r = np.atleast_2d(np.cov(real, rowvar=False))
    cov_g = np.atleast_2d(np.cov(gen, rowvar=False))

    wr, vr = np.linalg.eigh(cov_r)
    sqrt_r = (vr * np.sqrt(np.maximum(wr, 0.0))) @ vr.T
    prod = sqrt_r @ cov_g @ sqrt_r
    prod = 0.5 * (prod + prod.T)
    w = np.linalg.eigvalsh(prod)
    tol = 1e-8 * max(1.0, float(np.abs(w).max()))
    if w.min() < -tol:
        raise FloatingPointError("covariance product is not PSD within tolerance")
    trace_sqrt = np.sqrt(np.maximum(w, 0.0)).sum()
    diff = mu_r - mu_g
    return float(diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * trace_sqrt)


def diversity(features: np.ndarray, pair_count: int, seed: int) -> float:
    """Mean distance over `pair_count` random disjoint feature pairs."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2 * pair_count:
        raise ValueError("need at least 2*pair_count samples")
    rng = np.random.default_rng(seed)
    idx = rng.choice(features.shape[0], size=2 * pair_count, replace=False)
    a, b = features[idx[:pair_count]], features[idx[pair_count:]]
    return float(np.linalg.norm(a - b, axis=1).mean())


def perturb_features(F: np.ndarray, lam: float, seed: int,
                     permutation: np.ndarray | None = None) -> np.ndarray:
    """Batch-shuffle interpolation: F + lam * (F[perm] - F)."""
    F = np.asarray(F, dtype=np.float64)
    if F.shape[0] < 2:
        raise ValueError("need a batch of at least 2 rows")
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(F.shape[0])
    return F + lam * (F[permutation] - F)


def pca_intrinsic_dim(features: np.ndarray, variance_fraction: float) -> int:
    """Smallest component count explaining at least `variance_fraction`."""
    if not 0.0 < variance_fraction < 1.0:
        raise ValueError("variance_fraction must lie in (0, 1)")
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise ValueError("need at least two rows")
    centered = features - features.mean(axis=0)
    w = np.linalg.eigvalsh(np.cov(centered, rowvar=False))
    w = np.maximum(w[::-1], 0.0)
    total = w.sum()
    if total <= 0.0:
        return 1
    cum = np.cumsum(w) / total
    return int(np.searchsorted(cum, variance_fraction) + 1)


# -- analytic and instrumented FLOP accounting -----------------------------------
# Multiply-adds of matmul/affine contractions only, per sample, mirroring what
# the flop meter counts during execution. The masked baseline runs one full
# self-attention over all condition tokens for every sample (masking does not
# shrink the matmuls) with a plain linear layer standing in for the latent
# encoder; the routed fusion runs each decoder only on its segments plus the
# efficient-attention latent encoder on everything.

TRAIN_SEGMENT_FRACS = (0.49, 0.21, 0.21, 0.09)  # keep-prob 0.7 per condition


def _draw_decoder_madds(T: int, E: int) -> int:
    return (T * E * E) + 2 * (2 * T * E * E) + 2 * (T * 2 * T * E) + (T * E * E)


def _text_decoder_madds(T: int, L: int, E: int) -> int:
    return (T * E * E) + 2 * ((T + L) * E * E) + ((T + L) * E * E) + (T * E * E)


def _latent_encoder_madds(T: int, E: int) -> int:
    attn = 3 * (T * E * E) + (T * E * E) + (T * E * E)
    ffn = 2 * (T * E * (2 * E))
    mod = 4 * E * E   # step-embedding scale/shift head
    return attn + ffn + mod


def _masked_attention_madds(T: int, L: int, E: int) -> int:
    n = 3 * T + L
    return 3 * (n * E * E) + 2 * (n * n * E) + (n * E * E) + (T * E * E)


def masked_attention_baseline_flops(T: int, L: int, E: int,
                                    segment_fracs: tuple[float, float, float, float]
                                    = TRAIN_SEGMENT_FRACS) -> tuple[float, float]:
    """(routed_fusion_madds, masked_baseline_madds) per sample, one block."""
    b1, b2, b3, b4 = segment_fracs
    draw_frac = b1 + b3
    text_frac = b1 + b2
    mcm = (draw_frac * _draw_decoder_madds(T, E)
           + text_frac * _text_decoder_madds(T, L, E)
           + _latent_encoder_madds(T, E))
    return float(mcm), float(_masked_attention_madds(T, L, E))


class MaskedFusionBaseline(nn.Module):
    """Single masked self-attention over motion+trajectory+stickman+text tokens.

    Unused conditions are masked out of the attention map, which leaves every
    matmul at full size; a linear layer stands in for the latent encoder.
    """

    def __init__(self, rng: np.random.Generator, dim: int):
        self.q = nn.Linear(rng, dim, dim)
        self.k = nn.Linear(rng, dim, dim)
        self.v = nn.Linear(rng, dim, dim)
        self.out = nn.Linear(rng, dim, dim)
        self.latent = nn.Linear(rng, dim, dim)
        self._scale = 1.0 / np.sqrt(dim)

    def __call__(self, e_m: Tensor, e_j: Tensor, e_s: Tensor, e_t: Tensor,
                 use_text: bool, use_draw: bool) -> Tensor:
        T = e_m.shape[-2]
        tokens = concatenate([e_m, e_j, e_s, e_t], axis=-2)
        n = tokens.shape[-2]
        bias = np.zeros((n, n))
        if not use_draw:
            bias[:, T:3 * T] = -1e9
        if not use_text:
            bias[:, 3 * T:] = -1e9
        q, k, v = self.q(tokens), self.k(tokens), self.v(tokens)
        att = softmax(matmul(q, k.swap_last()) * self._scale + bias, axis=-1)
        fused = self.out(matmul(att, v))
        return self.latent(fused[..., :T, :])


def counted_fusion_madds(T: int, L: int, E: int,
                         segment_counts: tuple[int, int, int, int] = (10, 4, 4, 2),
                         seed: int = 0) -> tuple[float, float]:
    """Execute both fusion designs on a synthetic batch and count madds/sample."""
    rng = np.random.default_rng(seed)
    segs = [s for s, c in zip(((True, True), (True, False), (False, True),
                              (False, False)), segment_counts) for _ in range(c)]
    B = len(segs)
    draw_dec = DrawDecoder(rng, E)
    text_dec = TextDecoder(rng, E)
    latent = LatentEncoder(rng, E)
    baseline = MaskedFusionBaseline(rng, E)
    e_m = Tensor(rng.normal(size=(B, T, E)))
    e_j = Tensor(rng.normal(size=(B, T, E)))
    e_s = Tensor(rng.normal(size=(B, T, E)))
    e_t = Tensor(rng.normal(size=(B, L, E)))

    with no_grad():
        with flop_meter() as mcm_count:
            for i, (use_text, use_draw) in enumerate(segs):
                h = e_m[i]
                if use_draw:
                    h = h + draw_dec(e_m[i], e_j[i], e_s[i])
                if use_text:
                    h = h + text_dec(e_m[i], e_t[i])
                latent(h, np.zeros((1, E)))
        with flop_meter() as masked_count:
            for i, (use_text, use_draw) in enumerate(segs):
                baseline(e_m[i], e_j[i], e_s[i], e_t[i], use_text, use_draw)
    return mcm_count["madds"] / B, masked_count["madds"] / B
