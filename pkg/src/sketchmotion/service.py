"""HTTP service: /generate, /resample, /health (request/response in JSON).

Field names and shapes are pinned in docs/interface.md and mirrored by the
frontend's schema tests. Model weights and statistics are immutable shared
state; each request gets private sampling state, and a bounded admission
semaphore sheds load with a retry signal once the pool is full.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, replace

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .codec import StickmanCodec, load_codec
from .diffusion import NoiseSchedule, build_schedule
from .guidance import FeatureStats, GuidanceConfig, trajectory_target
from .model import ConditionSet, DrawCondition, MotionModel, load_model
from .motion import Trajectory2D, clip_to_record, resample_trajectory
from .sampler import SamplerSettings, ifg_sample, sample_motion
from .sga import StickmanSketch

DEFAULT_POOL_SIZE = 4


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def save_stats(path, stats: FeatureStats, layer_index: int) -> None:
    from . import nn
    nn.save_checkpoint(path, {"mean": stats.mean, "covariance": stats.covariance,
                              "covariance_inverse": stats.covariance_inverse},
                       {"kind": "feature_stats", "sample_count": stats.sample_count,
                        "ridge": stats.ridge, "layer_index": layer_index})


def load_stats(path) -> tuple[FeatureStats, int]:
    from . import nn
    arrays, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "feature_stats":
        raise ValueError("not a feature statistics file")
    stats = FeatureStats(mean=arrays["mean"], covariance=arrays["covariance"],
                         covariance_inverse=arrays["covariance_inverse"],
                         sample_count=int(meta["sample_count"]),
                         ridge=float(meta["ridge"]))
    return stats, int(meta["layer_index"])


@dataclass
class ServiceBundle:
    model: MotionModel
    codec: StickmanCodec
    stats: FeatureStats
    guidance_layer: int
    sched: NoiseSchedule
    checkpoint_hash: str
    stats_hash: str

    @staticmethod
    def load(model_path, codec_path, stats_path) -> "ServiceBundle":
        codec = load_codec(codec_path)
        model = load_model(model_path, codec)
        model.set_requires_grad(False)
        stats, layer = load_stats(stats_path)
        return ServiceBundle(model=model, codec=codec, stats=stats,
                             guidance_layer=layer, sched=build_schedule(),
                             checkpoint_hash=file_hash(model_path),
                             stats_hash=file_hash(stats_path))


class StickmanPayload(BaseModel):
    frame: int
    strokes: list[list[list[float]]]


class GuidanceOverrides(BaseModel):
    layer_index: int | None = None
    repeat: int | None = None
    lr: float | None = None
    eps_md: float | None = None
    clip_scale: float | None = None
    enabled: bool = True


class GenerateRequest(BaseModel):
    text: str | None = None
    trajectory: list[list[float]] | None = None
    timestamps: list[float] | None = None
    stickmen: list[StickmanPayload] | None = None
    length: int = Field(ge=2)
    resample_mode: str = "uniform"
    guidance: GuidanceOverrides | None = None
    seed: int | None = None


class ResampleRequest(BaseModel):
    trajectory: list[list[float]]
    timestamps: list[float] | None = None
    length: int = Field(ge=2)
    mode: str = "uniform"


def _input_error(field: str, message: str) -> HTTPException:
    return HTTPException(status_code=422,
                         detail=[{"loc": ["body", field], "msg": message}])


def _parse_trajectory(points, timestamps, field: str) -> Trajectory2D:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise _input_error(field, "trajectory must be at least two [x, y] points")
    try:
        return Trajectory2D(points=arr, timestamps=None if timestamps is None
                            else np.asarray(timestamps, dtype=np.float64))
    except ValueError as err:
        raise _input_error(field, str(err)) from None


def _parse_stickmen(payloads: list[StickmanPayload], length: int
                    ) -> list[tuple[int, StickmanSketch]]:
    out = []
    seen = set()
    for i, p in enumerate(payloads):
        field = f"stickmen[{i}]"
        if not 0 <= p.frame < length:
            raise _input_error(field + ".frame", f"frame must lie in [0, {length})")
        if p.frame in seen:
            raise _input_error(field + ".frame", "duplicate stickman frame")
        seen.add(p.frame)
        if len(p.strokes) != 6:
            raise _input_error(field + ".strokes", "a stickman needs exactly 6 strokes")
        try:
            sketch = StickmanSketch.from_wire(p.strokes)
        except ValueError as err:
            raise _input_error(field + ".strokes", str(err)) from None
        out.append((p.frame, sketch))
    return out


def create_app(bundle: ServiceBundle | None = None,
               pool_size: int = DEFAULT_POOL_SIZE,
               settings: SamplerSettings | None = None) -> FastAPI:
    app = FastAPI(title="sketchmotion")
    state = {"bundle": bundle, "started": time.time(),
             "pool": threading.Semaphore(pool_size),
             "settings": settings or SamplerSettings(),
             "seed_rng": np.random.default_rng(np.random.SeedSequence())}
    app.state.sketchmotion = state

    def need_bundle() -> ServiceBundle:
        b = state["bundle"]
        if b is None:
            raise HTTPException(status_code=503, detail="model is still loading")
        return b

    @app.get("/health")
    def handle_health():
        b = state["bundle"]
        return {"status": "ready" if b is not None else "loading",
                "checkpoint_hash": b.checkpoint_hash if b else "",
                "stats_hash": b.stats_hash if b else "",
                "layers": b.model.config.layers if b else 0,
                "uptime_s": time.time() - state["started"]}

    @app.post("/resample")
    def handle_resample(req: ResampleRequest):
        if req.mode not in ("uniform", "density"):
            raise _input_error("mode", "mode must be 'uniform' or 'density'")
        traj = _parse_trajectory(req.trajectory, req.timestamps, "trajectory")
        res = resample_trajectory(traj, req.length, req.mode)
        return {"points": res.points.tolist()}

    @app.post("/generate")
    def handle_generate(req: GenerateRequest):
        bundle = need_bundle()
        if not state["pool"].acquire(blocking=False):
            return JSONResponse(status_code=429, headers={"Retry-After": "1"},
                                content={"detail": "generation pool exhausted; retry"})
        try:
            return _generate(bundle, state, req)
        finally:
            state["pool"].release()

    def _generate(bundle: ServiceBundle, state, req: GenerateRequest):
        t_start = time.perf_counter()
        model = bundle.model
        seed = int(req.seed) if req.seed is not None else \
            int(state["seed_rng"].integers(0, 2**31))

        tokens = None
        if req.text is not None:
            tokens = req.text.lower().split()
            if len(tokens) > model.config.max_text_len:
                raise _input_error("text", f"at most {model.config.max_text_len} tokens")
            unknown = [t for t in tokens if t not in model.config.vocab]
            if unknown:
                raise _input_error("text", f"unknown tokens: {unknown}")

        resampled = None
        draw = None
        if req.trajectory is not None:
            if req.resample_mode not in ("uniform", "density"):
                raise _input_error("resample_mode", "must be 'uniform' or 'density'")
            raw = _parse_trajectory(req.trajectory, req.timestamps, "trajectory")
            resampled = resample_trajectory(raw, req.length, req.resample_mode)
            stickmen = _parse_stickmen(req.stickmen or [], req.length)
            draw = DrawCondition(trajectory=resampled, stickmen=stickmen)
        elif req.stickmen:
            raise _input_error("stickmen", "stickmen require a trajectory")

        t_encoded = time.perf_counter()
        cond = ConditionSet(text=tokens, draw=draw)
        overrides = req.guidance or GuidanceOverrides()
        guidance_loss = None
        try:
            if draw is not None and overrides.enabled:
                target, mask = trajectory_target(resampled.points,
                                                 model.config.motion_dim)
                cfg = GuidanceConfig(target=target, target_mask=mask,
                                     layer_index=bundle.guidance_layer)
                for name in ("layer_index", "repeat", "lr", "eps_md", "clip_scale"):
                    value = getattr(overrides, name)
                    if value is not None:
                        cfg = replace(cfg, **{name: value})
                motion, trace = ifg_sample(model, cond, cfg, bundle.stats,
                                           bundle.sched, seed=seed,
                                           settings=state["settings"])
                guidance_loss = trace.final_loss
            else:
                motion = sample_motion(model, cond, req.length, bundle.sched,
                                       seed=seed, settings=state["settings"])
        except FloatingPointError as err:
            raise HTTPException(status_code=500,
                                detail=f"numerical abort: {err}") from None
        t_sampled = time.perf_counter()
        record = clip_to_record(motion)
        t_done = time.perf_counter()
        return {
            "motion": record,
            "guidance_loss": guidance_loss,
            "resampled_trajectory": None if resampled is None
            else resampled.points.tolist(),
            "seed": seed,
            "timing_ms": {
                "encode": 1e3 * (t_encoded - t_start),
                "sample": 1e3 * (t_sampled - t_encoded),
                "decode": 1e3 * (t_done - t_sampled),
                "total": 1e3 * (t_done - t_start),
            },
        }

    return app
