"""Toy paired motion/text feature extractor for the quantitative metrics.

Two small heads map motions and captions into a shared 32-dim space with
unit-norm outputs. Training pushes matched pairs together and mismatched
pairs apart with a symmetric hinge margin. Absolute distances from this
model are only comparable within this package.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .autodiff import Tensor, concatenate, no_grad, sqrt, take_rows, tanh
from .model import FeatureNormalizer, motion_to_features
from .motion import MotionSequence

FEATURE_DIM = 32
MARGIN = 0.3


class MotionHead(nn.Module):
    def __init__(self, rng: np.random.Generator, motion_dim: int, out_dim: int):
        self.fc1 = nn.Linear(rng, 2 * motion_dim, 128)
        self.fc2 = nn.Linear(rng, 128, 128)
        self.out = nn.Linear(rng, 128, out_dim)

    def __call__(self, feats: Tensor) -> Tensor:
        mu = feats.mean(axis=-2)
        centered = feats - feats.mean(axis=-2, keepdims=True)
        var = (centered * centered).mean(axis=-2)
        pooled = concatenate([mu, sqrt(var + 1e-8)], axis=-1)
        h = tanh(self.fc2(tanh(self.fc1(pooled))))
        raw = self.out(h)
        norm = sqrt((raw * raw).sum(axis=-1, keepdims=True) + 1e-12)
        return raw / norm


class TextHead(nn.Module):
    def __init__(self, rng: np.random.Generator, vocab: tuple[str, ...], out_dim: int):
        self.table = Tensor(rng.normal(0.0, 0.3, size=(len(vocab), 64)),
                            requires_grad=True)
        self.fc1 = nn.Linear(rng, 64, 128)
        self.out = nn.Linear(rng, 128, out_dim)
        self._index = {tok: i for i, tok in enumerate(vocab)}

    def __call__(self, tokens: list[str]) -> Tensor:
        ids = np.array([self._index[t] for t in tokens], dtype=np.int64)
        pooled = take_rows(self.table, ids).mean(axis=0, keepdims=True)
        raw = self.out(tanh(self.fc1(pooled)))
        norm = sqrt((raw * raw).sum(axis=-1, keepdims=True) + 1e-12)
        return (raw / norm).reshape(-1)


class ToyContrastiveModel(nn.Module):
    def __init__(self, vocab: tuple[str, ...], motion_dim: int, seed: int = 0,
                 normalizer: FeatureNormalizer | None = None):
        rng = np.random.default_rng(seed)
        self.motion_head = MotionHead(rng, motion_dim, FEATURE_DIM)
        self.text_head = TextHead(rng, vocab, FEATURE_DIM)
        self.vocab = vocab
        self.motion_dim = motion_dim
        self.normalizer = normalizer or FeatureNormalizer(
            np.zeros(motion_dim), np.ones(motion_dim))

    def motion_features(self, motions: list[MotionSequence]) -> np.ndarray:
        feats = np.stack([self.normalizer.normalize(motion_to_features(m))
                          for m in motions])
        with no_grad():
            return self.motion_head(Tensor(feats)).data

    def text_features(self, captions: list[list[str]]) -> np.ndarray:
        with no_grad():
            return np.stack([self.text_head(c).data for c in captions])


def train_contrastive(dataset: list[tuple[MotionSequence, list[str]]], epochs: int,
                      seed: int, batch_size: int = 16, lr: float = 1e-3,
                      log_every: int = 0) -> tuple[ToyContrastiveModel, dict]:
    """Symmetric hinge objective on paired vs shuffled (motion, caption) pairs."""
    from .dataset import VOCABULARY

    feats_raw = np.stack([motion_to_features(m) for m, _ in dataset])
    normalizer = FeatureNormalizer.fit(feats_raw)
    model = ToyContrastiveModel(tuple(VOCABULARY), feats_raw.shape[-1], seed=seed,
                                normalizer=normalizer)
    feats = np.stack([normalizer.normalize(f) for f in feats_raw])
    captions = [c for _, c in dataset]
    opt = nn.Adam(model.named_params(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    n = len(dataset)
    history = {"loss": []}
    for _ in range(epochs):
        order = rng.permutation(n)
        running, batches = 0.0, 0
        for s in range(0, n - 1, batch_size):
            sel = order[s:s + batch_size]
            if sel.size < 2:
                continue
            opt.zero_grad()
            m_emb = model.motion_head(Tensor(feats[sel]))
            t_embs = [model.text_head(captions[i]) for i in sel]
            loss = Tensor(0.0)
            roll = np.roll(np.arange(sel.size), 1)
            for i in range(sel.size):
                pos = (m_emb[i] * t_embs[i]).sum()
                neg_t = (m_emb[i] * t_embs[roll[i]]).sum()
                neg_m = (m_emb[roll[i]] * t_embs[i]).sum()
                for neg in (neg_t, neg_m):
                    margin_term = neg - pos + MARGIN
                    if margin_term.item() > 0:
                        loss = loss + margin_term
            loss = loss * (1.0 / sel.size)
            if loss.requires_grad:
                loss.backward()
                opt.step()
            running += loss.item()
            batches += 1
        history["loss"].append(running / max(batches, 1))
        if log_every and len(history["loss"]) % log_every == 0:
            print(f"contrastive epoch {len(history['loss'])}: {history['loss'][-1]:.4f}")
    return model, history


def save_contrastive(path, model: ToyContrastiveModel) -> None:
    arrays = model.state_dict()
    arrays["buffer.norm_mean"] = model.normalizer.mean
    arrays["buffer.norm_std"] = model.normalizer.std
    nn.save_checkpoint(path, arrays, {"kind": "contrastive", "vocab": list(model.vocab),
                                      "motion_dim": model.motion_dim})


def load_contrastive(path) -> ToyContrastiveModel:
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "contrastive":
        raise ValueError("not a contrastive checkpoint")
    norm = FeatureNormalizer(arrays.pop("buffer.norm_mean"), arrays.pop("buffer.norm_std"))
    model = ToyContrastiveModel(tuple(meta["vocab"]), int(meta["motion_dim"]),
                                seed=0, normalizer=norm)
    model.load_state_dict(arrays)
    return model
