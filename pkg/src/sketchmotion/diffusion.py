"""Noise schedule, forward noising, DDPM/DDIM steps, and the condition mixture.

Schedule convention: per-step alphas are indexed 0..T_steps-1 for diffusion
steps t = 1..T_steps; alpha_bar(0) = 1 (clean data). The DDIM update reads the
cumulative product wherever a square root appears; the DDPM posterior mean
uses the per-step alpha together with the cumulative one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA_FIRST = 0.9999
ALPHA_LAST = 0.9800
DEFAULT_T_STEPS = 1000
DEFAULT_STRIDE = 20


@dataclass(frozen=True)
class NoiseSchedule:
    T_steps: int
    alpha: np.ndarray       # (T_steps,) per-step alphas, strictly in (0, 1)
    alpha_bar: np.ndarray   # (T_steps,) cumulative products, strictly decreasing

    def abar(self, t: int) -> float:
        """Cumulative alpha at diffusion step t, with abar(0) = 1."""
        if not 0 <= t <= self.T_steps:
            raise ValueError(f"step {t} outside [0, {self.T_steps}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def a(self, t: int) -> float:
        if not 1 <= t <= self.T_steps:
            raise ValueError(f"step {t} outside [1, {self.T_steps}]")
        return float(self.alpha[t - 1])


def build_schedule(T_steps: int = DEFAULT_T_STEPS) -> NoiseSchedule:
    """Linear alphas from 0.9999 to 0.9800 inclusive; cumulative product bar."""
    if T_steps < 2:
        raise ValueError("need T_steps >= 2")
    alpha = np.linspace(ALPHA_FIRST, ALPHA_LAST, T_steps)
    return NoiseSchedule(T_steps=T_steps, alpha=alpha, alpha_bar=np.cumprod(alpha))


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray,
                   sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if eps.shape != x0.shape:
        raise ValueError("noise must match the data shape")
    ab = sched.abar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddpm_mean(x_t: np.ndarray, t: int, eps_pred: np.ndarray,
              sched: NoiseSchedule) -> np.ndarray:
    """Posterior mean: (x_t - (1-a_t)/sqrt(1-abar_t) * eps) / sqrt(a_t)."""
    a = sched.a(t)
    ab = sched.abar(t)
    return (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(a)


def predict_x0(x_t: np.ndarray, t: int, eps_pred: np.ndarray,
               sched: NoiseSchedule) -> np.ndarray:
    """Clean-data estimate: (x_t - sqrt(1-abar_t) eps) / sqrt(abar_t)."""
    ab = sched.abar(t)
    return (x_t - np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(ab)


def ddim_step(x_t: np.ndarray, t: int, t_prev: int, eps_pred: np.ndarray,
              sched: NoiseSchedule) -> np.ndarray:
    """Deterministic reverse step t -> t_prev through the x0 estimate."""
    if t_prev > t:
        raise ValueError("t_prev must not exceed t")
    x0_hat = predict_x0(x_t, t, eps_pred, sched)
    ab_prev = sched.abar(t_prev)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_pred


def ddim_ladder(T_steps: int, stride: int = DEFAULT_STRIDE) -> list[int]:
    """Descending step list [T, T-stride, ...] ending above 0."""
    return list(range(T_steps, 0, -stride))


@dataclass(frozen=True)
class MixtureWeights:
    """Weights over the four condition settings; always sums to 1."""

    w1: float  # (text, draw)
    w2: float  # (none, draw)
    w3: float  # (text, none)
    w4: float  # (none, none)
    stage: str  # "early" | "late"

    def __post_init__(self):
        if abs(self.w1 + self.w2 + self.w3 + self.w4 - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if self.stage not in ("early", "late"):
            raise ValueError("stage must be 'early' or 'late'")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4)


def mixture_weights(t: int, T_steps: int, w: float, p_draw: float,
                    rng: np.random.Generator) -> MixtureWeights:
    """Two-stage guidance weights.

    Early stage (t >= T/10): w1 = w, w2 = w_hat, w3 = w - w_hat, w4 = 1 - 2w,
    where w_hat is w with probability p_draw and 0 otherwise (drawn per call).
    Late stage: (1, 0, 0, 0) so every condition refines the rough result.
    """
    if w <= 1.0:
        raise ValueError("guidance strength w must exceed 1")
    if not 0.0 <= p_draw <= 1.0:
        raise ValueError("p_draw must lie in [0, 1]")
    if t >= T_steps / 10.0:
        w_hat = w if rng.random() < p_draw else 0.0
        return MixtureWeights(w1=w, w2=w_hat, w3=w - w_hat, w4=1.0 - 2.0 * w,
                              stage="early")
    return MixtureWeights(w1=1.0, w2=0.0, w3=0.0, w4=0.0, stage="late")


def mix_noise(eps_td: np.ndarray, eps_d: np.ndarray, eps_t: np.ndarray,
              eps_none: np.ndarray, weights: MixtureWeights) -> np.ndarray:
    """Weighted mixture of the four per-setting noise predictions."""
    for arr in (eps_d, eps_t, eps_none):
        if arr.shape != eps_td.shape:
            raise ValueError("all noise predictions must share one shape")
    w1, w2, w3, w4 = weights.as_tuple()
    return w1 * eps_td + w2 * eps_d + w3 * eps_t + w4 * eps_none
