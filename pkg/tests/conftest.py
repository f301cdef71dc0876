"""Shared fixtures: tiny fast models for contract tests, cached toy bundle
for the trained-model acceptance criteria."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from sketchmotion.codec import load_codec, make_codec_pairs, pretrain_codec, save_codec
from sketchmotion.contrastive import load_contrastive, save_contrastive, train_contrastive
from sketchmotion.dataset import DatasetConfig, generate_synthetic_dataset
from sketchmotion.diffusion import build_schedule
from sketchmotion.model import load_model, save_model
from sketchmotion.sampler import estimate_feature_stats
from sketchmotion.evaluation import eval_condition
from sketchmotion.service import load_stats, save_stats
from sketchmotion.training import train_model

CACHE = Path(__file__).resolve().parent.parent / ".cache" / "test_bundle"

TOY = {
    "train_seed": 11, "test_seed": 12, "train_count": 256, "test_count": 48,
    "codec_per_clip": 4, "codec_seed": 21, "codec_epochs": 30,
    "contrastive_seed": 31, "contrastive_epochs": 30,
    "model_seed": 41, "model_epochs": 75, "batch_size": 16, "lr": 2e-3,
    "layers": 4, "dim": 64, "stats_layer": 3, "stats_seed": 51, "stats_clips": 8,
    "snapshot_at": [64, 480],
}


@pytest.fixture(scope="session")
def sched():
    return build_schedule()


@pytest.fixture(scope="session")
def tiny_dataset():
    cfg = DatasetConfig(seed=3, sample_count=16, T=24)
    return cfg, generate_synthetic_dataset(cfg)


@pytest.fixture(scope="session")
def tiny_codec(tiny_dataset):
    _, ds = tiny_dataset
    pairs = make_codec_pairs(ds, per_clip=2, seed=5)
    codec, _ = pretrain_codec(pairs, epochs=2, seed=11)
    return codec


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset, tiny_codec):
    """Small (2-layer, dim 32) briefly-trained model for mechanism tests."""
    cfg, ds = tiny_dataset
    model, _ = train_model(ds, epochs=2, seed=1, codec=tiny_codec, data_config=cfg,
                           batch_size=8, layers=2, dim=32)
    model.set_requires_grad(False)
    return model


class ToyBundle:
    def __init__(self, root: Path):
        self.root = root
        self.train_cfg = DatasetConfig(seed=TOY["train_seed"],
                                       sample_count=TOY["train_count"])
        self.test_cfg = DatasetConfig(seed=TOY["test_seed"],
                                      sample_count=TOY["test_count"])
        self.train_ds = generate_synthetic_dataset(self.train_cfg)
        self.test_ds = generate_synthetic_dataset(self.test_cfg)
        self.codec = load_codec(root / "codec.npz")
        self.codec_n1 = load_codec(root / "codec_n1.npz")
        self.snapshot_fids = json.loads((root / "snapshots.json").read_text())
        self.model = load_model(root / "model.npz", self.codec)
        self.model.set_requires_grad(False)
        self.contrastive = load_contrastive(root / "contrastive.npz")
        self.stats, self.stats_layer = load_stats(root / "stats.npz")
        self.sched = build_schedule()
        self.real_feats = self.contrastive.motion_features(
            [c for c, _ in self.test_ds])


def _build_bundle(root: Path) -> None:
    from sketchmotion.metrics import fid_like
    from sketchmotion.model import ConditionSet
    from sketchmotion.sampler import sample_motion

    root.mkdir(parents=True, exist_ok=True)
    train_cfg = DatasetConfig(seed=TOY["train_seed"], sample_count=TOY["train_count"])
    test_cfg = DatasetConfig(seed=TOY["test_seed"], sample_count=TOY["test_count"])
    train_ds = generate_synthetic_dataset(train_cfg)
    test_ds = generate_synthetic_dataset(test_cfg)
    sched = build_schedule()

    pairs = make_codec_pairs(train_ds, per_clip=TOY["codec_per_clip"],
                             seed=TOY["codec_seed"])
    codec, _ = pretrain_codec(pairs, epochs=TOY["codec_epochs"],
                              seed=TOY["codec_seed"] + 1)
    save_codec(root / "codec.npz", codec)

    # single-candidate ablation codec, same data and budget
    from sketchmotion.codec import StickmanCodec
    codec_n1, _ = pretrain_codec(pairs, epochs=TOY["codec_epochs"],
                                 seed=TOY["codec_seed"] + 1,
                                 codec=StickmanCodec(seed=TOY["codec_seed"] + 1,
                                                     n_candidates=1))
    save_codec(root / "codec_n1.npz", codec_n1)

    contrastive, _ = train_contrastive(train_ds, epochs=TOY["contrastive_epochs"],
                                       seed=TOY["contrastive_seed"])
    save_contrastive(root / "contrastive.npz", contrastive)
    real_feats = contrastive.motion_features([c for c, _ in test_ds])

    # snapshot hook records an unconditional generation distance curve
    snapshot_fids: list[list[float]] = []

    def snapshot(step, model):
        model.set_requires_grad(False)
        gens = [sample_motion(model, ConditionSet(text=cap), clip.frames, sched,
                              seed=9000 + i)
                for i, (clip, cap) in enumerate(test_ds[:40])]
        snapshot_fids.append([step, fid_like(real_feats,
                                             contrastive.motion_features(gens))])
        model.set_requires_grad(True)

    model, _ = train_model(train_ds, epochs=TOY["model_epochs"],
                           seed=TOY["model_seed"], codec=codec,
                           data_config=train_cfg, batch_size=TOY["batch_size"],
                           lr=TOY["lr"], layers=TOY["layers"], dim=TOY["dim"],
                           snapshot_hook=snapshot,
                           snapshot_at=tuple(TOY["snapshot_at"]))
    model.set_requires_grad(False)
    save_model(root / "model.npz", model)
    snapshot(TOY["model_epochs"] * (TOY["train_count"] // TOY["batch_size"]), model)
    model.set_requires_grad(False)

    conds = [eval_condition(c) for c, _ in test_ds[: TOY["stats_clips"]]]
    stats = estimate_feature_stats(model, conds, TOY["stats_layer"],
                                   test_cfg.T, sched, seed=TOY["stats_seed"])
    save_stats(root / "stats.npz", stats, TOY["stats_layer"])
    (root / "meta.json").write_text(json.dumps(TOY, sort_keys=True))
    (root / "snapshots.json").write_text(json.dumps(snapshot_fids))


@pytest.fixture(scope="session")
def toy_bundle() -> ToyBundle:
    """Full-scale trained bundle; built once and cached on disk.

    Training is deterministic, so the cached artifacts equal a fresh build;
    delete .cache/test_bundle to force a rebuild.
    """
    meta = CACHE / "meta.json"
    if not (meta.exists() and json.loads(meta.read_text()) == TOY):
        _build_bundle(CACHE)
    return ToyBundle(CACHE)
