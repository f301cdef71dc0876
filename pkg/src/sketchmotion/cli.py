"""Command-line workflows: data generation, training, stats, sampling, serving.

Every subcommand reads an optional JSON config file; explicit flags override
config values. The resolved configuration and seed are logged before work
starts, and all failures exit nonzero with a diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("sketchmotion")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _resolve(args: argparse.Namespace, config: dict, keys: list[str]) -> dict:
    """Merge config-file values with flag overrides (flags win when given)."""
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key)
    return out


def _log_resolved(cmd: str, resolved: dict) -> None:
    log.info("%s: resolved config %s", cmd, json.dumps(resolved, sort_keys=True,
                                                       default=str))


def _require(resolved: dict, *keys: str) -> None:
    missing = [k for k in keys if resolved.get(k) is None]
    if missing:
        raise SystemExit(f"missing required options: {', '.join(missing)}")


def _load_dataset(path: str):
    from .motion import load_clips
    clips = load_clips(path)
    return [(c, list(c.caption)) for c in clips]


def cmd_gen_data(args) -> int:
    from .dataset import DatasetConfig, generate_synthetic_dataset
    from .motion import save_clips

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["seed", "count", "frames", "out"])
    r["seed"] = r["seed"] if r["seed"] is not None else 0
    r["frames"] = r["frames"] if r["frames"] is not None else 60
    _require(r, "count", "out")
    _log_resolved("gen-data", r)
    ds_cfg = DatasetConfig(seed=int(r["seed"]), sample_count=int(r["count"]),
                           T=int(r["frames"]))
    pairs = generate_synthetic_dataset(ds_cfg)
    save_clips(r["out"], [clip for clip, _ in pairs])
    log.info("wrote %d clips to %s", len(pairs), r["out"])
    return 0


def cmd_train_codec(args) -> int:
    from .codec import make_codec_pairs, pretrain_codec, save_codec

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["data", "out", "seed", "epochs", "per_clip"])
    r["seed"] = r["seed"] if r["seed"] is not None else 0
    r["epochs"] = r["epochs"] if r["epochs"] is not None else 30
    r["per_clip"] = r["per_clip"] if r["per_clip"] is not None else 4
    _require(r, "data", "out")
    _log_resolved("train-codec", r)
    dataset = _load_dataset(r["data"])
    pairs = make_codec_pairs(dataset, per_clip=int(r["per_clip"]), seed=int(r["seed"]))
    codec, history = pretrain_codec(pairs, epochs=int(r["epochs"]), seed=int(r["seed"]),
                                    log_every=5)
    save_codec(r["out"], codec)
    log.info("codec loss %.4f -> %.4f; saved to %s", history["initial"],
             history["epochs"][-1], r["out"])
    return 0


def cmd_train_model(args) -> int:
    from .codec import load_codec
    from .dataset import DatasetConfig
    from .model import save_model
    from .training import train_model

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["data", "codec", "out", "seed", "epochs", "batch_size",
                             "lr", "layers", "dim"])
    defaults = {"seed": 0, "epochs": 40, "batch_size": 16, "lr": 2e-3,
                "layers": 4, "dim": 64}
    for k, v in defaults.items():
        r[k] = r[k] if r[k] is not None else v
    _require(r, "data", "codec", "out")
    _log_resolved("train-model", r)
    dataset = _load_dataset(r["data"])
    codec = load_codec(r["codec"])
    data_cfg = DatasetConfig(seed=0, sample_count=len(dataset),
                             T=dataset[0][0].frames)
    model, history = train_model(dataset, epochs=int(r["epochs"]), seed=int(r["seed"]),
                                 codec=codec, data_config=data_cfg,
                                 batch_size=int(r["batch_size"]), lr=float(r["lr"]),
                                 layers=int(r["layers"]), dim=int(r["dim"]),
                                 log_every=25)
    save_model(r["out"], model)
    log.info("final loss %.4f; saved to %s", history["loss"][-1], r["out"])
    return 0


def cmd_estimate_stats(args) -> int:
    from .codec import load_codec
    from .evaluation import eval_condition
    from .model import load_model
    from .diffusion import build_schedule
    from .sampler import estimate_feature_stats
    from .service import save_stats

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["data", "codec", "model", "out", "layer", "clips", "seed"])
    defaults = {"layer": 3, "clips": 8, "seed": 0}
    for k, v in defaults.items():
        r[k] = r[k] if r[k] is not None else v
    _require(r, "data", "codec", "model", "out")
    _log_resolved("estimate-stats", r)
    dataset = _load_dataset(r["data"])
    codec = load_codec(r["codec"])
    model = load_model(r["model"], codec)
    model.set_requires_grad(False)
    conds = [eval_condition(clip) for clip, _ in dataset[: int(r["clips"])]]
    stats = estimate_feature_stats(model, conds, int(r["layer"]),
                                   dataset[0][0].frames, build_schedule(),
                                   seed=int(r["seed"]))
    save_stats(r["out"], stats, int(r["layer"]))
    log.info("stats over %d rows; saved to %s", stats.sample_count, r["out"])
    return 0


def cmd_sample(args) -> int:
    from .codec import load_codec
    from .diffusion import build_schedule
    from .guidance import GuidanceConfig, trajectory_target
    from .model import ConditionSet, DrawCondition, load_model
    from .motion import Trajectory2D, clip_to_record, resample_trajectory
    from .sampler import ifg_sample, sample_motion
    from .service import load_stats

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["model", "codec", "stats", "out", "seed", "text",
                             "trajectory", "frames", "resample_mode"])
    defaults = {"seed": 0, "frames": 60, "resample_mode": "uniform"}
    for k, v in defaults.items():
        r[k] = r[k] if r[k] is not None else v
    _require(r, "model", "codec", "out")
    for key in ("model", "codec"):
        if not Path(r[key]).exists():
            raise SystemExit(f"checkpoint not found: {r[key]}")
    _log_resolved("sample", r)
    codec = load_codec(r["codec"])
    model = load_model(r["model"], codec)
    model.set_requires_grad(False)
    sched = build_schedule()
    tokens = r["text"].lower().split() if r["text"] else None
    draw = None
    if r["trajectory"]:
        with open(r["trajectory"]) as fh:
            pts = np.asarray(json.load(fh), dtype=np.float64)
        traj = resample_trajectory(Trajectory2D(points=pts), int(r["frames"]),
                                   r["resample_mode"])
        draw = DrawCondition(trajectory=traj)
    cond = ConditionSet(text=tokens, draw=draw)
    if draw is not None:
        if not r["stats"]:
            raise SystemExit("guided sampling requires --stats")
        stats, layer = load_stats(r["stats"])
        target, mask = trajectory_target(draw.trajectory.points,
                                         model.config.motion_dim)
        gcfg = GuidanceConfig(layer_index=layer, target=target, target_mask=mask)
        motion, trace = ifg_sample(model, cond, gcfg, stats, sched, seed=int(r["seed"]))
        log.info("final guidance loss %.6f", trace.final_loss)
    else:
        motion = sample_motion(model, cond, int(r["frames"]), sched, seed=int(r["seed"]))
    with open(r["out"], "w") as fh:
        json.dump(clip_to_record(motion), fh)
    log.info("wrote motion to %s", r["out"])
    return 0


def cmd_evaluate(args) -> int:
    from .codec import load_codec
    from .contrastive import load_contrastive, save_contrastive, train_contrastive
    from .diffusion import build_schedule
    from .evaluation import evaluate
    from .guidance import GuidanceConfig
    from .model import load_model
    from .sampler import estimate_feature_stats
    from .service import load_stats

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["model", "codec", "data", "train_data", "contrastive",
                             "stats", "out", "seeds", "guided"])
    _require(r, "model", "codec", "data", "out")
    _log_resolved("evaluate", r)
    codec = load_codec(r["codec"])
    model = load_model(r["model"], codec)
    model.set_requires_grad(False)
    test_set = _load_dataset(r["data"])
    contrastive_path = r["contrastive"]
    if contrastive_path and Path(contrastive_path).exists():
        contrastive = load_contrastive(contrastive_path)
    else:
        if not r["train_data"]:
            raise SystemExit("need --contrastive or --train-data to fit one")
        log.info("fitting toy contrastive model from %s", r["train_data"])
        contrastive, _ = train_contrastive(_load_dataset(r["train_data"]),
                                           epochs=30, seed=0)
        if contrastive_path:
            save_contrastive(contrastive_path, contrastive)
    seeds = [int(s) for s in str(r["seeds"]).split(",")] if r["seeds"] else None
    guidance = stats = None
    if r["guided"]:
        if not r["stats"]:
            raise SystemExit("guided evaluation requires --stats")
        stats, layer = load_stats(r["stats"])
        guidance = GuidanceConfig(layer_index=layer)
    report = evaluate(model, test_set, codec, contrastive, build_schedule(),
                      seeds=seeds, guidance=guidance, stats=stats)
    with open(r["out"], "w") as fh:
        fh.write(report.to_json())
    txt = str(Path(r["out"]).with_suffix(".txt"))
    with open(txt, "w") as fh:
        fh.write(report.summary_table() + "\n")
    log.info("report written to %s and %s", r["out"], txt)
    print(report.summary_table())
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceBundle, create_app

    cfg = _load_config(args.config)
    r = _resolve(args, cfg, ["model", "codec", "stats", "host", "port", "pool"])
    defaults = {"host": "127.0.0.1", "port": 8731, "pool": 4}
    for k, v in defaults.items():
        r[k] = r[k] if r[k] is not None else v
    _require(r, "model", "codec", "stats")
    _log_resolved("serve", r)
    bundle = ServiceBundle.load(r["model"], r["codec"], r["stats"])
    app = create_app(bundle, pool_size=int(r["pool"]))
    uvicorn.run(app, host=r["host"], port=int(r["port"]), log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchmotion")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        for flag, kwargs in flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(fn=fn)

    intf = {"type": int}
    add("gen-data", cmd_gen_data, {"--seed": intf, "--count": intf,
                                   "--frames": intf, "--out": {}})
    add("train-codec", cmd_train_codec, {"--data": {}, "--out": {}, "--seed": intf,
                                         "--epochs": intf, "--per-clip": dict(type=int, dest="per_clip")})
    add("train-model", cmd_train_model, {"--data": {}, "--codec": {}, "--out": {},
                                         "--seed": intf, "--epochs": intf,
                                         "--batch-size": dict(type=int, dest="batch_size"),
                                         "--lr": {"type": float}, "--layers": intf,
                                         "--dim": intf})
    add("estimate-stats", cmd_estimate_stats, {"--data": {}, "--codec": {},
                                               "--model": {}, "--out": {},
                                               "--layer": intf, "--clips": intf,
                                               "--seed": intf})
    add("sample", cmd_sample, {"--model": {}, "--codec": {}, "--stats": {},
                               "--out": {}, "--seed": intf, "--text": {},
                               "--trajectory": {}, "--frames": intf,
                               "--resample-mode": {"dest": "resample_mode"}})
    add("evaluate", cmd_evaluate, {"--model": {}, "--codec": {}, "--data": {},
                                   "--train-data": {"dest": "train_data"},
                                   "--contrastive": {}, "--stats": {}, "--out": {},
                                   "--seeds": {}, "--guided": {"action": "store_true",
                                                               "default": None}})
    add("serve", cmd_serve, {"--model": {}, "--codec": {}, "--stats": {},
                             "--host": {}, "--port": intf, "--pool": intf})
    return parser


def cli_dispatch(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        return args.fn(args)
    except SystemExit as err:
        if err.code and not isinstance(err.code, int):
            print(f"error: {err.code}", file=sys.stderr)
            return 2
        return int(err.code or 0)
    except Exception as err:  # surface a diagnostic, nonzero exit
        log.error("%s failed: %s", args.command, err)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
