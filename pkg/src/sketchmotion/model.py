"""Conditioned noise-prediction network with batch-partitioned condition fusion.

A batch is split into four segments by which conditions are active:
B1=(text,draw), B2=(text,-), B3=(-,draw), B4=(-,-). Each block runs the text
decoder (efficient attention) only on B1/B2 rows and the draw decoder
(dot-product attention) only on B1/B3 rows, adds the decoder outputs onto the
motion features as offsets, and re-encodes with a latent encoder; B4 rows pass
through fusion untouched. Segment tags are independent from payloads: a
sample may carry a condition its segment ignores (training-time dropout does
exactly that), and absent payloads encode to learned null tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import (Tensor, concatenate, matmul, no_grad, scatter_rows,
                       softmax, take_rows, tanh)
from .codec import StickmanCodec
from .motion import MotionSequence, Trajectory2D
from .sga import StickmanSketch
from .skeleton import TOY_SKELETON, snap_to_bone_lengths

MOTION_DIM = 3 + TOY_SKELETON.joint_count * 3  # root_xz, yaw, flattened pose
TRAJ_CHANNELS = slice(0, 2)
POSE_CHANNELS = slice(3, MOTION_DIM)

# Segment order B1..B4: (use_text, use_draw).
SEGMENTS = ((True, True), (True, False), (False, True), (False, False))
SEGMENT_NAMES = {s: f"B{i + 1}" for i, s in enumerate(SEGMENTS)}


@dataclass
class DrawCondition:
    """Resampled trajectory plus stickmen anchored at unique frames."""

    trajectory: Trajectory2D
    stickmen: list[tuple[int, StickmanSketch]] = field(default_factory=list)

    def __post_init__(self):
        T = len(self.trajectory)
        frames = [f for f, _ in self.stickmen]
        if len(set(frames)) != len(frames):
            raise ValueError("stickman frames must be unique")
        for f in frames:
            if not 0 <= f < T:
                raise ValueError(f"stickman frame {f} outside [0, {T})")

    def presence_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.trajectory))
        for f, _ in self.stickmen:
            mask[f] = 1.0
        return mask


@dataclass
class ConditionSet:
    """Optional text tokens and optional drawing condition."""

    text: list[str] | None = None
    draw: DrawCondition | None = None


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    dim: int = 64
    motion_dim: int = MOTION_DIM
    max_text_len: int = 16
    vocab: tuple[str, ...] = ()


def motion_to_features(m: MotionSequence) -> np.ndarray:
    """(T, MOTION_DIM) feature rows: root_xz, yaw, flattened local pose."""
    return np.concatenate(
        [m.root_xz, m.root_yaw[:, None], m.local_pose.reshape(m.frames, -1)], axis=1)


def features_to_motion(feats: np.ndarray, fps: float,
                       caption: list[str] | None = None) -> MotionSequence:
    """Decode feature rows into a motion; poses snap back onto the skeleton."""
    T = feats.shape[0]
    pose = feats[:, POSE_CHANNELS].reshape(T, TOY_SKELETON.joint_count, 3)
    pose = np.stack([snap_to_bone_lengths(pose[t]) for t in range(T)])
    return MotionSequence(fps=fps, root_xz=feats[:, TRAJ_CHANNELS].copy(),
                          root_yaw=feats[:, 2].copy(), local_pose=pose,
                          caption=caption or [])


class FeatureNormalizer:
    """Per-channel z-normalization frozen from the training set."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(std, dtype=np.float64), 1e-3)

    @staticmethod
    def fit(features: np.ndarray) -> "FeatureNormalizer":
        flat = features.reshape(-1, features.shape[-1])
        return FeatureNormalizer(flat.mean(axis=0), flat.std(axis=0))

    def normalize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.mean) / self.std

    def denormalize(self, feats: np.ndarray) -> np.ndarray:
        return feats * self.std + self.mean

    def normalize_traj(self, points: np.ndarray) -> np.ndarray:
        return (points - self.mean[TRAJ_CHANNELS]) / self.std[TRAJ_CHANNELS]


class TextEncoder(nn.Module):
    """Token table + positional sinusoid + one self-attention block."""

    def __init__(self, rng: np.random.Generator, vocab: tuple[str, ...], dim: int):
        self.table = Tensor(rng.normal(0.0, 0.3, size=(len(vocab), dim)),
                            requires_grad=True)
        self.attn = nn.DotProductSelfAttention(rng, dim)
        self.null_token = Tensor(rng.normal(0.0, 0.3, size=(1, dim)), requires_grad=True)
        self._index = {tok: i for i, tok in enumerate(vocab)}
        self.dim = dim

    def __call__(self, tokens: list[str] | None) -> Tensor:
        if tokens is None:
            return self.null_token
        try:
            ids = np.array([self._index[t] for t in tokens], dtype=np.int64)
        except KeyError as err:
            raise ValueError(f"text token {err.args[0]!r} outside vocabulary") from None
        h = take_rows(self.table, ids) + nn.sinusoid_table(np.arange(len(ids)), self.dim)
        return h + self.attn(h)


class TrajectoryEncoder(nn.Module):
    """Six same-padded 1-D convolutions with tanh between them."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.convs = [nn.Conv1d(rng, 2, dim)] + [nn.Conv1d(rng, dim, dim) for _ in range(5)]

    def __call__(self, traj: Tensor) -> Tensor:
        h = traj
        for conv in self.convs[:-1]:
            h = tanh(conv(h))
        return self.convs[-1](h)


class StickmanRowEncoder(nn.Module):
    """Affine map of [frozen embedding | presence flag] rows to model width."""

    def __init__(self, rng: np.random.Generator, codec_dim: int, dim: int):
        self.proj = nn.Linear(rng, codec_dim + 1, dim)

    def __call__(self, rows: np.ndarray) -> Tensor:
        return self.proj(Tensor(rows))


class MotionEncoder(nn.Module):
    def __init__(self, rng: np.random.Generator, motion_dim: int, dim: int):
        self.proj = nn.Linear(rng, motion_dim, dim)
        self.dim = dim

    def __call__(self, x_t: np.ndarray, t_steps: np.ndarray) -> Tensor:
        """x_t: (B, T, D); t_steps: (B,) -> (B, T, dim)."""
        B, T, _ = x_t.shape
        step_emb = nn.sinusoid_table(t_steps, self.dim)[:, None, :]
        frame_emb = nn.sinusoid_table(np.arange(T), self.dim)[None]
        return self.proj(Tensor(x_t)) + (step_emb + frame_emb)


class DrawDecoder(nn.Module):
    """Dot-product cross-attention from motion rows onto (motion+traj | stick) rows."""

    def __init__(self, rng: np.random.Generator, dim: int):
        self.q = nn.Linear(rng, dim, dim)
        self.k = nn.Linear(rng, dim, dim)
        self.v = nn.Linear(rng, dim, dim)
        self.out = nn.Linear(rng, dim, dim)
        self._scale = 1.0 / np.sqrt(dim)

    def __call__(self, e_m: Tensor, e_j: Tensor, e_s: Tensor) -> Tensor:
        e_kv = concatenate([e_m + e_j, e_s], axis=-2)      # (..., 2T, E)
        q, k, v = self.q(e_m), self.k(e_kv), self.v(e_kv)
        att = softmax(matmul(q, k.swap_last()) * self._scale, axis=-1)
        return self.out(matmul(att, v))


class TextDecoder(nn.Module):
    """Efficient attention: Q softmaxed over channels, K over tokens.

    Output is Q (K^T V); the cost is linear in the motion token count.
    """

    def __init__(self, rng: np.random.Generator, dim: int):
        self.q = nn.Linear(rng, dim, dim)
        self.k = nn.Linear(rng, dim, dim)
        self.v = nn.Linear(rng, dim, dim)

    def __call__(self, e_m: Tensor, e_t: Tensor) -> Tensor:
        kv = concatenate([e_m, e_t], axis=-2)              # (T+L, E)
        qs = softmax(self.q(e_m), axis=-1)
        ks = softmax(self.k(kv), axis=-2)
        return matmul(qs, matmul(ks.swap_last(), self.v(kv)))


class LatentEncoder(nn.Module):
    """Efficient self-attention + feed-forward, both residual (pre-norm).

    Branch inputs are modulated by per-channel scale/shift computed from the
    diffusion-step embedding: noise prediction needs step-dependent scaling of
    the features, which additive step embeddings alone cannot express at this
    model size. The modulation head starts at zero, so the block begins as a
    plain pre-norm residual block.
    """

    def __init__(self, rng: np.random.Generator, dim: int):
        self.ln1 = nn.LayerNorm(dim)
        self.q = nn.Linear(rng, dim, dim)
        self.k = nn.Linear(rng, dim, dim)
        self.v = nn.Linear(rng, dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.FeedForward(rng, dim, 2 * dim)
        self.mod = nn.Linear(rng, dim, 4 * dim)
        self.mod.w.data[:] = 0.0
        self.dim = dim

    def __call__(self, x: Tensor, t_emb: np.ndarray) -> Tensor:
        m = self.mod(Tensor(t_emb))
        m = m.reshape(*m.shape[:-1], 4, self.dim)
        s1, b1 = m[..., 0, :], m[..., 1, :]
        s2, b2 = m[..., 2, :], m[..., 3, :]
        y = self.ln1(x) * (s1 + 1.0) + b1
        qs = softmax(self.q(y), axis=-1)
        ks = softmax(self.k(y), axis=-2)
        x = x + matmul(qs, matmul(ks.swap_last(), self.v(y)))
        z = self.ln2(x) * (s2 + 1.0) + b2
        return x + self.ffn(z)


class McmLayer(nn.Module):
    def __init__(self, rng: np.random.Generator, dim: int):
        self.draw = DrawDecoder(rng, dim)
        self.text = TextDecoder(rng, dim)
        self.latent = LatentEncoder(rng, dim)


@dataclass
class EncodedBatch:
    """Model-ready batch: encodings plus segment routing indices."""

    x_t: np.ndarray                    # (B, T, D) normalized features
    t_steps: np.ndarray                # (B,)
    e_j: Tensor | None                 # (Bd, T, E) rows for draw-routed samples
    e_s: Tensor | None                 # (Bd, T, E)
    e_t: list[Tensor]                  # per text-routed sample, (L_i, E)
    draw_idx: np.ndarray               # rows routed through the draw decoder
    text_idx: np.ndarray               # rows routed through the text decoder
    segments: list[tuple[bool, bool]]  # (use_text, use_draw) per row


class MotionModel(nn.Module):
    def __init__(self, config: ModelConfig, codec: StickmanCodec, seed: int = 0,
                 normalizer: FeatureNormalizer | None = None):
        rng = np.random.default_rng(seed)
        dim = config.dim
        self.motion_enc = MotionEncoder(rng, config.motion_dim, dim)
        self.traj_enc = TrajectoryEncoder(rng, dim)
        self.stick_enc = StickmanRowEncoder(rng, codec.dim, dim)
        self.text_enc = TextEncoder(rng, config.vocab, dim)
        self.null_traj = Tensor(rng.normal(0.0, 0.3, size=dim), requires_grad=True)
        self.null_stick = Tensor(rng.normal(0.0, 0.3, size=dim), requires_grad=True)
        self.blocks = [McmLayer(rng, dim) for _ in range(config.layers)]
        self.head = nn.Linear(rng, dim, config.motion_dim)
        self.config = config
        self.codec = codec
        self.normalizer = normalizer or FeatureNormalizer(
            np.zeros(config.motion_dim), np.ones(config.motion_dim))

    # Frozen-codec parameters and normalizer buffers are excluded from the
    # trainable registry; checkpointing handles them separately.
    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out = super().named_params(prefix)
        return {k: v for k, v in out.items() if not k.startswith(f"{prefix}codec.")}

    # -- input encoding ---------------------------------------------------------

    def stickman_rows(self, draw: DrawCondition, T: int) -> np.ndarray:
        """(T, codec_dim+1) rows: frozen embedding + presence flag, zeros elsewhere."""
        rows = np.zeros((T, self.codec.dim + 1))
        for frame, sketch in draw.stickmen:
            rows[frame, :-1] = self.codec.encode(sketch)
            rows[frame, -1] = 1.0
        return rows

    def encode_draw(self, draw: DrawCondition | None, T: int) -> tuple[Tensor, Tensor]:
        """Trajectory and stickman row encodings plus frame-position terms.

        Rows carry the same frame sinusoid as the motion encoding so attention
        can route frame-anchored content; learned null tokens when absent.
        """
        pos = nn.sinusoid_table(np.arange(T), self.config.dim)
        if draw is None:
            return Tensor(pos) + self.null_traj, Tensor(pos) + self.null_stick
        if len(draw.trajectory) != T:
            raise ValueError("draw trajectory must have one point per frame")
        traj = self.normalizer.normalize_traj(draw.trajectory.points)
        return (self.traj_enc(Tensor(traj)) + pos,
                self.stick_enc(self.stickman_rows(draw, T)) + pos)

    def encode_inputs(self, x_t: np.ndarray, t_step: int,
                      draw: DrawCondition | None, text: list[str] | None
                      ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Single-sample encodings (e_m, e_j, e_s, e_t)."""
        e_m = self.motion_enc(x_t[None], np.array([t_step]))[0]
        e_j, e_s = self.encode_draw(draw, x_t.shape[0])
        return e_m, e_j, e_s, self.text_enc(text)

    def encode_batch(self, x_t: np.ndarray, t_steps: np.ndarray,
                     conds: list[ConditionSet],
                     segments: list[tuple[bool, bool]] | None = None) -> EncodedBatch:
        B, T, _ = x_t.shape
        if segments is None:
            segments = [(c.text is not None, c.draw is not None) for c in conds]
        draw_idx = np.array([i for i, s in enumerate(segments) if s[1]], dtype=np.int64)
        text_idx = np.array([i for i, s in enumerate(segments) if s[0]], dtype=np.int64)
        e_j = e_s = None
        if draw_idx.size:
            pairs = [self.encode_draw(conds[i].draw, T) for i in draw_idx]
            e_j = concatenate([p[0].reshape(1, T, -1) for p in pairs], axis=0)
            e_s = concatenate([p[1].reshape(1, T, -1) for p in pairs], axis=0)
        e_t = [self.text_enc(conds[i].text) for i in text_idx]
        return EncodedBatch(x_t=x_t, t_steps=np.asarray(t_steps), e_j=e_j, e_s=e_s,
                            e_t=e_t, draw_idx=draw_idx, text_idx=text_idx,
                            segments=list(segments))

    # -- fusion and stacking ------------------------------------------------------

    def _fuse(self, block: McmLayer, h: Tensor, enc: EncodedBatch) -> Tensor:
        B = h.shape[0]
        out = h
        if enc.draw_idx.size:
            off = block.draw(h[enc.draw_idx], enc.e_j, enc.e_s)
            out = out + scatter_rows(off, enc.draw_idx, B)
        for j, i in enumerate(enc.text_idx):
            off = block.text(h[int(i)], enc.e_t[j])
            out = out + scatter_rows(off.reshape(1, *off.shape), np.array([i]), B)
        return out

    def forward_encoded(self, enc: EncodedBatch, capture_layer: int | None = None,
                        inject=None) -> tuple[Tensor, Tensor | None]:
        """Noise prediction for an encoded batch.

        capture_layer (1-based) returns that block's condition-fusion output.
        inject, when given, is called as inject(layer_index, site, features)
        after fusion ("fusion") and after the last latent encoder ("final")
        and may return replacement features.
        """
        h = self.motion_enc(enc.x_t, enc.t_steps)
        t_emb = nn.sinusoid_table(enc.t_steps, self.config.dim)[:, None, :]
        captured = None
        n = len(self.blocks)
        for li, block in enumerate(self.blocks, start=1):
            h = self._fuse(block, h, enc)
            if capture_layer == li:
                captured = h
            if inject is not None:
                replaced = inject(li, "fusion", h)
                h = h if replaced is None else replaced
            h = block.latent(h, t_emb)
        if inject is not None:
            replaced = inject(n, "final", h)
            h = h if replaced is None else replaced
        return self.head(h), captured

    def forward_until(self, enc: EncodedBatch, layer_index: int) -> Tensor:
        """Run up to and including block layer_index's condition fusion (1-based)."""
        if not 1 <= layer_index <= len(self.blocks):
            raise ValueError("layer_index out of range")
        h = self.motion_enc(enc.x_t, enc.t_steps)
        t_emb = nn.sinusoid_table(enc.t_steps, self.config.dim)[:, None, :]
        for li, block in enumerate(self.blocks, start=1):
            h = self._fuse(block, h, enc)
            if li == layer_index:
                return h
            h = block.latent(h, t_emb)
        raise AssertionError("unreachable")

    def forward_from(self, fused: Tensor, enc: EncodedBatch, layer_index: int) -> Tensor:
        """Continue from a layer's fusion output: latent encoder, later blocks, head."""
        t_emb = nn.sinusoid_table(enc.t_steps, self.config.dim)[:, None, :]
        h = self.blocks[layer_index - 1].latent(fused, t_emb)
        for block in self.blocks[layer_index:]:
            h = self._fuse(block, h, enc)
            h = block.latent(h, t_emb)
        return self.head(h)

    def forward(self, x_t: np.ndarray, t_step: int, length: int | None = None,
                draw: DrawCondition | None = None, text: list[str] | None = None,
                segment: tuple[bool, bool] | None = None) -> np.ndarray:
        """Single-sample noise prediction (numpy in/out, no graph retained)."""
        if length is not None and x_t.shape[0] != length:
            raise ValueError("length disagrees with x_t")
        with no_grad():
            enc = self.encode_batch(x_t[None], np.array([t_step]),
                                    [ConditionSet(text=text, draw=draw)],
                                    None if segment is None else [segment])
            eps, _ = self.forward_encoded(enc)
            if not np.all(np.isfinite(eps.data)):
                raise FloatingPointError("non-finite activations in model forward")
            return eps.data[0]


def save_model(path, model: MotionModel) -> None:
    arrays = model.state_dict()
    arrays["buffer.norm_mean"] = model.normalizer.mean
    arrays["buffer.norm_std"] = model.normalizer.std
    meta = {"kind": "motion_model", "layers": model.config.layers,
            "dim": model.config.dim, "motion_dim": model.config.motion_dim,
            "max_text_len": model.config.max_text_len,
            "vocab": list(model.config.vocab)}
    nn.save_checkpoint(path, arrays, meta)


def load_model(path, codec: StickmanCodec) -> MotionModel:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "motion_model":
        raise ValueError("not a motion model checkpoint")
    config = ModelConfig(layers=int(meta["layers"]), dim=int(meta["dim"]),
                         motion_dim=int(meta["motion_dim"]),
                         max_text_len=int(meta["max_text_len"]),
                         vocab=tuple(meta["vocab"]))
    norm = FeatureNormalizer(arrays.pop("buffer.norm_mean"), arrays.pop("buffer.norm_std"))
    model = MotionModel(config, codec, seed=0, normalizer=norm)
    model.load_state_dict(arrays)
    return model
