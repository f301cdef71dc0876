/** DOM wiring: canvases, prompt box, generate/replay buttons, status line. */

import { ApiError, Client } from "./api.js";
import { StickmanCollector, StrokeRecorder } from "./capture.js";
import {
  canvasToWorld, nearestFrameIndex, normalizeSketch, PointerSample,
  strokeToTrajectory, worldToCanvas,
} from "./geometry.js";
import { drawPoseFrontal, drawTopDown, frameAtTime } from "./playback.js";
import { emptySession, GenerationRunner, placeStickman, SessionState } from "./session.js";

const BACKEND = (window as any).SKETCHMOTION_BACKEND ?? "http://127.0.0.1:8731";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function canvasPos(canvas: HTMLCanvasElement, ev: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [ev.clientX - rect.left, ev.clientY - rect.top];
}

window.addEventListener("DOMContentLoaded", () => {
  const client = new Client(BACKEND);
  const runner = new GenerationRunner(client);
  let session: SessionState = emptySession(60);
  let preview: [number, number][] | null = null;
  let playbackStart: number | null = null;

  const trajCanvas = el<HTMLCanvasElement>("trajectory-canvas");
  const stickCanvas = el<HTMLCanvasElement>("stickman-canvas");
  const poseCanvas = el<HTMLCanvasElement>("pose-canvas");
  const topCanvas = el<HTMLCanvasElement>("topdown-canvas");
  const status = el<HTMLDivElement>("status");
  const lossBox = el<HTMLDivElement>("guidance-loss");
  const timingBox = el<HTMLDivElement>("timing");
  const strokeCount = el<HTMLDivElement>("stroke-count");
  const promptBox = el<HTMLInputElement>("prompt");
  const generateBtn = el<HTMLButtonElement>("generate");
  const replayBtn = el<HTMLButtonElement>("replay");
  const clearSketchBtn = el<HTMLButtonElement>("clear-sketch");
  const placeBtn = el<HTMLButtonElement>("place-sketch");
  const modeSelect = el<HTMLSelectElement>("resample-mode");

  const trajCtx = trajCanvas.getContext("2d")!;
  const stickCtx = stickCanvas.getContext("2d")!;
  const poseCtx = poseCanvas.getContext("2d")!;
  const topCtx = topCanvas.getContext("2d")!;

  const collector = new StickmanCollector();
  let placing = false;

  function redrawTrajectory() {
    trajCtx.clearRect(0, 0, trajCanvas.width, trajCanvas.height);
    if (session.trajectory) {
      trajCtx.strokeStyle = "#6b7280";
      trajCtx.beginPath();
      session.trajectory.forEach(([wx, wy], i) => {
        const [px, py] = worldToCanvas(wx, wy, trajCanvas.width, trajCanvas.height);
        if (i === 0) trajCtx.moveTo(px, py);
        else trajCtx.lineTo(px, py);
      });
      trajCtx.stroke();
    }
    if (preview) {
      trajCtx.fillStyle = "#2563eb";
      for (const [wx, wy] of preview) {
        const [px, py] = worldToCanvas(wx, wy, trajCanvas.width, trajCanvas.height);
        trajCtx.fillRect(px - 1.5, py - 1.5, 3, 3);
      }
      trajCtx.fillStyle = "#dc2626";
      for (const s of session.stickmen) {
        const [wx, wy] = preview[Math.min(s.frame, preview.length - 1)];
        const [px, py] = worldToCanvas(wx, wy, trajCanvas.width, trajCanvas.height);
        trajCtx.beginPath();
        trajCtx.arc(px, py, 6, 0, 2 * Math.PI);
        trajCtx.fill();
      }
    }
  }

  async function refreshPreview() {
    if (!session.trajectory) {
      preview = null;
      redrawTrajectory();
      return;
    }
    try {
      preview = await client.resample(
        session.trajectory,
        session.resampleMode === "density" ? session.timestamps : null,
        session.length, session.resampleMode,
      );
    } catch (err) {
      status.textContent = `resample failed: ${err}`;
      preview = null;
    }
    redrawTrajectory();
  }

  const trajRecorder = new StrokeRecorder((samples: PointerSample[]) => {
    const { trajectory, timestamps } = strokeToTrajectory(
      samples, trajCanvas.width, trajCanvas.height);
    session = { ...session, trajectory, timestamps, stickmen: [] };
    void refreshPreview();
  }, () => { status.textContent = "stroke too short; draw a longer path"; });

  trajCanvas.addEventListener("pointerdown", (ev) => {
    if (placing) return;
    const [x, y] = canvasPos(trajCanvas, ev);
    trajRecorder.down(x, y, ev.timeStamp);
  });
  trajCanvas.addEventListener("pointermove", (ev) => {
    if (placing) return;
    const [x, y] = canvasPos(trajCanvas, ev);
    trajRecorder.move(x, y, ev.timeStamp);
  });
  trajCanvas.addEventListener("pointerup", () => { if (!placing) trajRecorder.up(); });

  trajCanvas.addEventListener("click", (ev) => {
    if (!placing || !preview || !collector.complete) return;
    const [px, py] = canvasPos(trajCanvas, ev as unknown as PointerEvent);
    const [wx, wy] = canvasToWorld(px, py, trajCanvas.width, trajCanvas.height);
    const frame = nearestFrameIndex(preview, wx, wy);
    session = placeStickman(session, {
      frame, strokes: normalizeSketch(collector.strokes),
    });
    collector.clear();
    stickCtx.clearRect(0, 0, stickCanvas.width, stickCanvas.height);
    placing = false;
    placeBtn.textContent = "place on trajectory";
    updateStickmanUi();
    redrawTrajectory();
  });

  function updateStickmanUi() {
    strokeCount.textContent =
      `${collector.count}/6 strokes` +
      (session.stickmen.length ? ` | placed: ${session.stickmen.map(s => s.frame).join(", ")}` : "");
    placeBtn.disabled = !collector.complete || !preview;
  }

  let currentStick: PointerSample[] = [];
  const stickRecorder = new StrokeRecorder((samples) => {
    try {
      collector.add(samples.map((s) => [s.x, s.y] as [number, number]));
    } catch (err) {
      status.textContent = String(err);
    }
    updateStickmanUi();
  });
  stickCanvas.addEventListener("pointerdown", (ev) => {
    const [x, y] = canvasPos(stickCanvas, ev);
    currentStick = [{ x, y, t_ms: ev.timeStamp }];
    stickRecorder.down(x, y, ev.timeStamp);
    stickCtx.beginPath();
    stickCtx.moveTo(x, y);
  });
  stickCanvas.addEventListener("pointermove", (ev) => {
    if (currentStick.length === 0) return;
    const [x, y] = canvasPos(stickCanvas, ev);
    stickRecorder.move(x, y, ev.timeStamp);
    stickCtx.lineTo(x, y);
    stickCtx.strokeStyle = "#111827";
    stickCtx.stroke();
  });
  stickCanvas.addEventListener("pointerup", () => {
    currentStick = [];
    stickRecorder.up();
  });

  clearSketchBtn.addEventListener("click", () => {
    collector.clear();
    stickCtx.clearRect(0, 0, stickCanvas.width, stickCanvas.height);
    updateStickmanUi();
  });
  placeBtn.addEventListener("click", () => {
    if (!collector.complete) return;
    placing = true;
    placeBtn.textContent = "click a trajectory point...";
  });
  modeSelect.addEventListener("change", () => {
    session = { ...session, resampleMode: modeSelect.value as "uniform" | "density" };
    void refreshPreview();
  });

  function animate(ts: number) {
    const resp = session.lastResponse;
    if (resp && playbackStart !== null) {
      const elapsed = (ts - playbackStart) / 1000;
      const frame = frameAtTime(resp.motion, elapsed);
      drawPoseFrontal(poseCtx, resp.motion, frame, poseCanvas.width, poseCanvas.height);
      drawTopDown(topCtx, resp.motion, frame,
                  resp.resampled_trajectory as [number, number][] | null,
                  topCanvas.width, topCanvas.height);
      if (elapsed > resp.motion.frames / resp.motion.fps) {
        playbackStart = ts; // loop
      }
    }
    requestAnimationFrame(animate);
  }
  requestAnimationFrame(animate);

  async function runGeneration(seed: number | null) {
    session = { ...session, prompt: promptBox.value };
    status.textContent = "generating...";
    generateBtn.disabled = true;
    try {
      const resp = await runner.submit(session, seed);
      if (resp === null) return; // superseded
      session = { ...session, lastResponse: resp, replaySeed: resp.seed };
      playbackStart = performance.now();
      lossBox.textContent = resp.guidance_loss === null
        ? "guidance loss: (unguided)"
        : `guidance loss: ${resp.guidance_loss}`;
      const t = resp.timing_ms;
      timingBox.textContent =
        `encode ${t.encode.toFixed(0)} ms | sample ${t.sample.toFixed(0)} ms | ` +
        `decode ${t.decode.toFixed(0)} ms | total ${t.total.toFixed(0)} ms | seed ${resp.seed}`;
      status.textContent = "done";
      replayBtn.disabled = false;
    } catch (err) {
      status.textContent = err instanceof ApiError
        ? `server rejected request: ${JSON.stringify(err.detail)}`
        : `request failed (is the backend running?): ${err}`;
    } finally {
      generateBtn.disabled = false;
    }
  }

  generateBtn.addEventListener("click", () => void runGeneration(null));
  replayBtn.addEventListener("click", () => void runGeneration(session.replaySeed));

  void client.health().then((h) => {
    status.textContent = `backend ${h.status}; ${h.layers} blocks, checkpoint ${h.checkpoint_hash}`;
  }).catch(() => {
    status.textContent = `backend unreachable at ${BACKEND}`;
  });
  updateStickmanUi();
});
