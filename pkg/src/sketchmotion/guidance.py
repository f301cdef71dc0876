"""Feature statistics, Mahalanobis distance, and update clipping.

The training-free guidance loop (see sampler.py) runs SGD on one block's
condition-fusion output against a spatial target; clipping compares the
updated feature's Mahalanobis distance to the original feature's and, when
the allowance is exceeded, keeps only a small fraction of the update.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import MOTION_DIM, TRAJ_CHANNELS

RIDGE_SCALE = 1e-6
RANK_DEFICIENT_RIDGE_SCALE = 1e-3


@dataclass
class FeatureStats:
    """Gaussian fit of per-token fusion features (ridged covariance)."""

    mean: np.ndarray                 # (E,)
    covariance: np.ndarray           # (E, E), symmetric, ridge included
    covariance_inverse: np.ndarray   # (E, E)
    sample_count: int
    ridge: float

    def __post_init__(self):
        e = self.mean.shape[0]
        if self.covariance.shape != (e, e) or self.covariance_inverse.shape != (e, e):
            raise ValueError("covariance shapes must match the mean dimension")
        if not np.allclose(self.covariance, self.covariance.T):
            raise ValueError("covariance must be symmetric")
        ident = self.covariance_inverse @ self.covariance
        if np.abs(ident - np.eye(e)).max() > 1e-6:
            raise ValueError("covariance inverse is inconsistent")


class StreamingStats:
    """Mergeable streaming mean/covariance over feature rows (Chan's update)."""

    def __init__(self, dim: int):
        self.dim = dim
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    def update(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, self.dim)
        if rows.shape[0] == 0:
            return
        other = StreamingStats(self.dim)
        other.n = rows.shape[0]
        other.mean = rows.mean(axis=0)
        centered = rows - other.mean
        other.m2 = centered.T @ centered
        self.merge(other)

    def merge(self, other: "StreamingStats") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return
        total = self.n + other.n
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / total)
        self.mean = self.mean + delta * (other.n / total)
        self.n = total

    def finalize(self) -> FeatureStats:
        if self.n < 2:
            raise ValueError("need at least two rows to estimate covariance")
        cov = self.m2 / self.n
        scale = RIDGE_SCALE
        if self.n < self.dim + 1:
            warnings.warn(
                f"only {self.n} rows for {self.dim}-dim covariance; "
                "estimate is rank deficient, applying a larger ridge",
                RuntimeWarning, stacklevel=2)
            scale = RANK_DEFICIENT_RIDGE_SCALE
        ridge = scale * max(np.trace(cov) / self.dim, 1.0)
        cov_reg = cov + ridge * np.eye(self.dim)
        cov_reg = 0.5 * (cov_reg + cov_reg.T)
        inv = np.linalg.inv(cov_reg)
        return FeatureStats(mean=self.mean.copy(), covariance=cov_reg,
                            covariance_inverse=inv, sample_count=self.n, ridge=ridge)


def mahalanobis(F: np.ndarray, stats: FeatureStats) -> float:
    """Mean per-token Mahalanobis distance of (T, E) or (E,) features."""
    rows = np.asarray(F, dtype=np.float64).reshape(-1, stats.mean.shape[0])
    d = rows - stats.mean
    sq = np.einsum("ij,jk,ik->i", d, stats.covariance_inverse, d)
    return float(np.sqrt(np.maximum(sq, 0.0)).mean())


def md_clip(F_orig: np.ndarray, F_upd: np.ndarray, stats: FeatureStats,
            eps_md: float | None, clip_scale: float) -> tuple[np.ndarray, bool]:
    """Clip an update that drifts beyond the original feature's distance budget.

    Returns (features, fired). When M(F_upd) > M(F_orig) + eps_md the update
    shrinks to F_orig + clip_scale * (F_upd - F_orig); eps_md=None disables
    clipping entirely.
    """
    if eps_md is None:
        return F_upd, False
    if mahalanobis(F_upd, stats) > mahalanobis(F_orig, stats) + eps_md:
        return F_orig + clip_scale * (F_upd - F_orig), True
    return F_upd, False


def guidance_loss(x0_hat, target: np.ndarray, mask: np.ndarray):
    """Mean squared error over mask-selected entries (0 when the mask is empty).

    Unselected entries never contribute. Works on arrays or graph tensors.
    """
    mask = np.asarray(mask, dtype=np.float64)
    n = float(mask.sum())
    diff = (x0_hat - target) * mask
    return (diff * diff).sum() * (1.0 / max(n, 1.0))


@dataclass
class GuidanceConfig:
    """Hyperparameters of the feature-guidance loop (defaults: best-practice row).

    target/target_mask use the motion-feature layout (T, MOTION_DIM) in meters;
    trajectory_target() builds the common trajectory-only case.
    """

    layer_index: int = 3
    repeat: int = 10
    lr: float = 50.0
    eps_md: float | None = 1.0
    clip_scale: float = 0.01
    target: np.ndarray | None = None
    target_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.repeat < 0:
            raise ValueError("repeat must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not -1.0 <= self.clip_scale <= 1.0:
            raise ValueError("clip_scale must lie in [-1, 1]")
        if self.layer_index < 1:
            raise ValueError("layer_index is 1-based")


def trajectory_target(points: np.ndarray, motion_dim: int = MOTION_DIM
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Spatial target/mask covering only the planar root channels."""
    points = np.asarray(points, dtype=np.float64)
    T = points.shape[0]
    target = np.zeros((T, motion_dim))
    mask = np.zeros((T, motion_dim))
    target[:, TRAJ_CHANNELS] = points
    mask[:, TRAJ_CHANNELS] = 1.0
    return target, mask


@dataclass
class GuidanceTrace:
    """Per-run diagnostics of the guidance loop."""

    final_loss: float = 0.0
    step_losses: list[list[float]] = field(default_factory=list)
    clip_counts: list[int] = field(default_factory=list)
    skipped_nonfinite: int = 0
