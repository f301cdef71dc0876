import { describe, expect, it } from "vitest";

import {
  canvasToWorld, CANVAS_WORLD_METERS, nearestFrameIndex, normalizeSketch,
  strokeToTrajectory, worldToCanvas,
} from "../src/geometry.js";
import { StickmanCollector, StrokeRecorder } from "../src/capture.js";
import { buildRequest, emptySession, placeStickman } from "../src/session.js";
import { frameAtTime, playbackDurationSeconds } from "../src/playback.js";
import { motionClipSchema } from "../src/schema.js";

describe("canvas/world mapping", () => {
  it("round-trips points", () => {
    const [wx, wy] = canvasToWorld(100, 50, 400, 400);
    const [px, py] = worldToCanvas(wx, wy, 400, 400);
    expect(px).toBeCloseTo(100, 9);
    expect(py).toBeCloseTo(50, 9);
  });

  it("maps the canvas center to the world origin", () => {
    const [wx, wy] = canvasToWorld(200, 200, 400, 400);
    expect(wx).toBeCloseTo(0, 12);
    expect(wy).toBeCloseTo(0, 12);
  });

  it("spans the configured width in meters", () => {
    const [left] = canvasToWorld(0, 200, 400, 400);
    const [right] = canvasToWorld(400, 200, 400, 400);
    expect(right - left).toBeCloseTo(CANVAS_WORLD_METERS, 9);
  });
});

describe("stroke capture", () => {
  it("keeps samples ordered and discards single-sample strokes", () => {
    const strokes: number[][] = [];
    let discards = 0;
    const rec = new StrokeRecorder(
      (s) => strokes.push(s.map((p) => p.x)),
      () => discards++,
    );
    rec.down(1, 0, 0); rec.move(2, 0, 5); rec.move(3, 0, 9); rec.up();
    rec.down(9, 9, 20); rec.up();
    expect(strokes).toEqual([[1, 2, 3]]);
    expect(discards).toBe(1);
  });

  it("preserves timestamps for density resampling", () => {
    const samples = [
      { x: 0, y: 0, t_ms: 100 },
      { x: 10, y: 0, t_ms: 130 },
      { x: 20, y: 0, t_ms: 190 },
    ];
    const { timestamps } = strokeToTrajectory(samples, 400, 400);
    expect(timestamps[0]).toBe(0);
    expect(timestamps[1]).toBeCloseTo(30);
    expect(timestamps[2]).toBeCloseTo(90);
    expect(timestamps.every((t, i) => i === 0 || t > timestamps[i - 1])).toBe(true);
  });

  it("forces strictly increasing timestamps on duplicates", () => {
    const samples = [
      { x: 0, y: 0, t_ms: 50 },
      { x: 1, y: 0, t_ms: 50 },
      { x: 2, y: 0, t_ms: 50 },
    ];
    const { timestamps } = strokeToTrajectory(samples, 400, 400);
    expect(timestamps[1]).toBeGreaterThan(timestamps[0]);
    expect(timestamps[2]).toBeGreaterThan(timestamps[1]);
  });
});

describe("stickman collection", () => {
  it("enables submission only at exactly six strokes", () => {
    const c = new StickmanCollector();
    for (let i = 0; i < 5; i++) c.add([[0, 0], [1, 1]]);
    expect(c.complete).toBe(false);
    c.add([[0, 0], [1, 1]]);
    expect(c.complete).toBe(true);
    expect(() => c.add([[0, 0], [1, 1]])).toThrow(/six strokes/);
  });

  it("normalizes the bounding box into [-0.9, 0.9]^2", () => {
    const strokes: [number, number][][] = [
      [[10, 10], [110, 10]],
      [[10, 10], [10, 210]],
    ];
    const out = normalizeSketch(strokes);
    const xs = out.flat().map((p) => p[0]);
    const ys = out.flat().map((p) => p[1]);
    expect(Math.max(...xs.map(Math.abs), ...ys.map(Math.abs))).toBeCloseTo(0.9, 9);
    // aspect ratio preserved: x span 100 px vs y span 200 px
    const xSpan = Math.max(...xs) - Math.min(...xs);
    const ySpan = Math.max(...ys) - Math.min(...ys);
    expect(xSpan / ySpan).toBeCloseTo(0.5, 9);
  });

  it("flips the y axis into drawing-box orientation", () => {
    const out = normalizeSketch([[[0, 0], [0, 100]], [[100, 0], [100, 100]]]);
    // canvas top (y=0) becomes the box top (positive y)
    expect(out[0][0][1]).toBeGreaterThan(out[0][1][1]);
  });
});

describe("anchoring", () => {
  const preview: [number, number][] = Array.from({ length: 10 }, (_, i) => [i, 0]);

  it("maps a click to the nearest frame index", () => {
    expect(nearestFrameIndex(preview, 4.4, 0.3)).toBe(4);
    expect(nearestFrameIndex(preview, 8.9, -0.1)).toBe(9);
  });

  it("replaces a sketch anchored at an occupied frame", () => {
    let s = emptySession(10);
    const strokes = Array.from({ length: 6 }, () =>
      [[0, 0], [0.5, 0.5]] as [number, number][]);
    s = placeStickman(s, { frame: 3, strokes });
    const strokes2 = strokes.map((st) => st.map(([x, y]) => [x + 0.1, y] as [number, number]));
    s = placeStickman(s, { frame: 3, strokes: strokes2 });
    expect(s.stickmen).toHaveLength(1);
    expect(s.stickmen[0].strokes[0][0][0]).toBeCloseTo(0.1);
  });
});

describe("request building", () => {
  it("lowercases the prompt and omits empty fields", () => {
    let s = emptySession(24);
    s.prompt = "  A Person Walks ";
    const req = buildRequest(s, 7);
    expect(req.text).toBe("a person walks");
    expect(req.trajectory).toBeNull();
    expect(req.stickmen).toBeNull();
    expect(req.seed).toBe(7);
    expect(req.length).toBe(24);
  });
});

describe("playback timing", () => {
  const clip = motionClipSchema.parse({
    version: 1, fps: 20, skeleton: "toy17-v1", frames: 40,
    root_xz: Array.from({ length: 40 }, () => [0, 0]),
    root_yaw: Array.from({ length: 40 }, () => 0),
    local_pose: Array.from({ length: 40 }, () =>
      Array.from({ length: 17 }, () => [0, 0, 0])),
    caption: [],
  });

  it("duration is frames/fps", () => {
    expect(playbackDurationSeconds(clip)).toBeCloseTo(2.0);
  });

  it("clamps the frame index at the end", () => {
    expect(frameAtTime(clip, 0)).toBe(0);
    expect(frameAtTime(clip, 1.0)).toBe(20);
    expect(frameAtTime(clip, 99)).toBe(39);
  });
});
