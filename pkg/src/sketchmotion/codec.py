"""Self-supervised stickman autoencoder.

The encoder embeds each stroke independently (shared conv stack over the
point sequence), fuses the six stroke vectors with a self-attention block and
mean pooling (permutation-invariant), and emits a fixed-size embedding. The
decoder predicts N candidate limb-offset sets; training uses the candidate
loss, which re-weights the best hypothesis 10x so ambiguous sketches keep
several plausible poses alive. After pretraining the encoder is frozen and
shared with the generator.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .autodiff import Tensor, concatenate, no_grad, tanh
from .motion import MotionSequence
from .sga import StickmanSketch, generate_stickman, random_style
from .skeleton import TOY_SKELETON, limb_offsets

EMBED_DIM = 64
STROKE_POINTS = 16
N_CANDIDATES = 8


def _resample_stroke(points: np.ndarray, k: int = STROKE_POINTS) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] <= 0:
        return np.repeat(points[:1], k, axis=0)
    t = np.linspace(0.0, arc[-1], k)
    return np.stack([np.interp(t, arc, points[:, 0]),
                     np.interp(t, arc, points[:, 1])], axis=1)


def sketch_to_array(sketch: StickmanSketch) -> np.ndarray:
    """(6, STROKE_POINTS, 2) input tensor; strokes resampled to equal length."""
    return np.stack([_resample_stroke(s.points) for s in sketch.strokes])


class StickmanEncoder(nn.Module):
    def __init__(self, rng: np.random.Generator, dim: int = EMBED_DIM):
        self.conv1 = nn.Conv1d(rng, 2, dim // 2)
        self.conv2 = nn.Conv1d(rng, dim // 2, dim)
        self.attn = nn.DotProductSelfAttention(rng, dim)
        self.ffn = nn.FeedForward(rng, dim, 2 * dim)
        self.out = nn.Linear(rng, dim, dim)
        self.dim = dim

    def __call__(self, strokes: Tensor) -> Tensor:
        """strokes: (..., 6, S, 2) -> embedding (..., dim)."""
        h = tanh(self.conv2(tanh(self.conv1(strokes))))
        per_stroke = h.mean(axis=-2)             # (..., 6, dim)
        fused = per_stroke + self.attn(per_stroke)
        fused = fused + self.ffn(fused)
        return self.out(fused.mean(axis=-2))     # pool over strokes


class CandidateDecoder(nn.Module):
    def __init__(self, rng: np.random.Generator, dim: int = EMBED_DIM,
                 n_candidates: int = N_CANDIDATES, joints: int = TOY_SKELETON.joint_count):
        self.fc1 = nn.Linear(rng, dim, 4 * dim)
        self.fc2 = nn.Linear(rng, 4 * dim, 4 * dim)
        self.head = nn.Linear(rng, 4 * dim, n_candidates * (joints - 1) * 3)
        self.n_candidates = n_candidates
        self.joints = joints

    def __call__(self, emb: Tensor) -> Tensor:
        """embedding (..., dim) -> candidate offsets (..., N, J-1, 3)."""
        h = tanh(self.fc2(tanh(self.fc1(emb))))
        out = self.head(h)
        return out.reshape(*out.shape[:-1], self.n_candidates, self.joints - 1, 3)


class StickmanCodec(nn.Module):
    def __init__(self, seed: int = 0, dim: int = EMBED_DIM,
                 n_candidates: int = N_CANDIDATES):
        rng = np.random.default_rng(seed)
        self.encoder = StickmanEncoder(rng, dim)
        self.decoder = CandidateDecoder(rng, dim, n_candidates)
        self.dim = dim
        self.frozen = False

    def freeze_encoder(self) -> None:
        self.encoder.set_requires_grad(False)
        self.frozen = True

    def encode(self, sketch: StickmanSketch) -> np.ndarray:
        """Frozen-path embedding of one sketch, shape (dim,)."""
        with no_grad():
            return self.encoder(Tensor(sketch_to_array(sketch))).data

    def decode(self, emb: np.ndarray) -> np.ndarray:
        """Candidate limb offsets for one embedding, shape (N, J-1, 3)."""
        with no_grad():
            return self.decoder(Tensor(np.asarray(emb))).data


def encode_stickman(codec: StickmanCodec, sketch: StickmanSketch) -> np.ndarray:
    return codec.encode(sketch)


def decode_candidates(codec: StickmanCodec, emb: np.ndarray) -> np.ndarray:
    return codec.decode(emb)


def candidate_loss(candidates: Tensor | np.ndarray, gt_offsets: np.ndarray) -> Tensor:
    """Best-of-N offset loss.

    l_n = 0.1 * sum((gt - pred_n)^2); total = 10 * l_k + sum_n l_n with
    k = argmin_n l_n, ties broken toward the lowest index.
    """
    cands = candidates if isinstance(candidates, Tensor) else Tensor(candidates)
    gt = np.asarray(gt_offsets, dtype=np.float64)
    n = cands.shape[0]
    per = []
    for i in range(n):
        diff = cands[i] - gt
        per.append((diff * diff).sum() * 0.1)
    k = int(np.argmin([p.item() for p in per]))
    total = per[k] * 10.0
    for p in per:
        total = total + p
    return total


def batch_candidate_loss(candidates: Tensor, gt: np.ndarray) -> Tensor:
    """Mean candidate loss over a batch: candidates (B, N, J-1, 3), gt (B, J-1, 3)."""
    diff = candidates - Tensor(gt[:, None])
    per = (diff * diff).sum(axis=(-1, -2)) * 0.1          # (B, N)
    ks = np.argmin(per.data, axis=1)
    best = concatenate([per[i, int(k)].reshape(1) for i, k in enumerate(ks)])
    return (best * 10.0 + per.sum(axis=1)).mean()


def make_codec_pairs(dataset: list[tuple[MotionSequence, list[str]]],
                     per_clip: int, seed: int) -> list[tuple[np.ndarray, StickmanSketch]]:
    """(pose, SGA sketch) training pairs sampled uniformly over frames."""
    pairs = []
    for i, (clip, _) in enumerate(dataset):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        for j in range(per_clip):
            frame = int(rng.integers(0, clip.frames))
            pose = clip.local_pose[frame]
            style = random_style(rng)
            sketch = generate_stickman(pose, style, int(rng.integers(0, 2**31)))
            pairs.append((pose, sketch))
    return pairs


def pretrain_codec(pairs: list[tuple[np.ndarray, StickmanSketch]], epochs: int,
                   seed: int, batch_size: int = 32, lr: float = 2e-3,
                   codec: StickmanCodec | None = None,
                   log_every: int = 0) -> tuple[StickmanCodec, dict]:
    """Train the autoencoder on (pose, sketch) pairs; freeze the encoder after.

    Deterministic given the seed. Returns (codec, history) where history has
    the initial and per-epoch mean losses.
    """
    codec = codec or StickmanCodec(seed=seed)
    xs = np.stack([sketch_to_array(s) for _, s in pairs])
    ys = np.stack([limb_offsets(p) for p, _ in pairs])
    n = xs.shape[0]
    opt = nn.Adam(codec.named_params(), lr=lr)
    order_rng = np.random.default_rng(np.random.SeedSequence([seed, 9999]))

    def epoch_loss_eval() -> float:
        with no_grad():
            total = 0.0
            for s in range(0, n, 256):
                xb, yb = xs[s:s + 256], ys[s:s + 256]
                out = codec.decoder(codec.encoder(Tensor(xb)))
                total += batch_candidate_loss(out, yb).item() * xb.shape[0]
            return total / n

    history = {"initial": epoch_loss_eval(), "epochs": []}
    for _ in range(epochs):
        idx = order_rng.permutation(n)
        running = 0.0
        for s in range(0, n, batch_size):
            sel = idx[s:s + batch_size]
            opt.zero_grad()
            out = codec.decoder(codec.encoder(Tensor(xs[sel])))
            loss = batch_candidate_loss(out, ys[sel])
            if not np.isfinite(loss.item()):
                raise FloatingPointError("non-finite codec loss; aborting training")
            loss.backward()
            opt.step()
            running += loss.item() * sel.size
        history["epochs"].append(running / n)
        if log_every and len(history["epochs"]) % log_every == 0:
            print(f"codec epoch {len(history['epochs'])}: loss {history['epochs'][-1]:.4f}")
    codec.freeze_encoder()
    return codec, history


def best_candidate_rmse(codec: StickmanCodec, pose: np.ndarray,
                        sketch: StickmanSketch) -> float:
    """RMSE of the closest candidate's limb offsets against the pose's."""
    gt = limb_offsets(pose)
    cands = codec.decode(codec.encode(sketch))
    errs = np.sqrt(((cands - gt) ** 2).mean(axis=(1, 2)))
    return float(errs.min())


def save_codec(path, codec: StickmanCodec) -> None:
    nn.save_checkpoint(path, codec.state_dict(),
                       {"kind": "stickman_codec", "dim": codec.dim,
                        "n_candidates": codec.decoder.n_candidates})


def load_codec(path) -> StickmanCodec:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "stickman_codec":
        raise ValueError("not a stickman codec checkpoint")
    codec = StickmanCodec(seed=0, dim=int(meta["dim"]),
                          n_candidates=int(meta["n_candidates"]))
    codec.load_state_dict(arrays)
    codec.freeze_encoder()
    return codec
