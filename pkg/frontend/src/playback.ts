/** Skeleton playback: frontal 2-D pose view plus a top-down path overlay. */

import { frontalSegments, SKELETON_PARENTS, worldToCanvas } from "./geometry.js";
import { MotionClip } from "./schema.js";

export interface PlaybackState {
  clip: MotionClip;
  frame: number;
  playing: boolean;
  startedAt: number | null;
}

export function playbackDurationSeconds(clip: MotionClip): number {
  return clip.frames / clip.fps;
}

export function frameAtTime(clip: MotionClip, elapsedSeconds: number): number {
  const raw = Math.floor(elapsedSeconds * clip.fps);
  return Math.min(raw, clip.frames - 1);
}

export function drawPoseFrontal(
  ctx: CanvasRenderingContext2D, clip: MotionClip, frame: number,
  width: number, height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const pose = clip.local_pose[frame];
  const scale = height / 2.4; // body spans roughly +-1.2 m around the pelvis
  const cx = width / 2;
  const cy = height * 0.55;
  ctx.strokeStyle = "#1d4ed8";
  ctx.lineWidth = 3;
  ctx.lineCap = "round";
  for (const [x1, y1, x2, y2] of frontalSegments(pose, SKELETON_PARENTS)) {
    ctx.beginPath();
    ctx.moveTo(cx + x1 * scale, cy - y1 * scale);
    ctx.lineTo(cx + x2 * scale, cy - y2 * scale);
    ctx.stroke();
  }
  const head = pose[4];
  ctx.beginPath();
  ctx.arc(cx + head[0] * scale, cy - head[1] * scale, 0.09 * scale, 0, 2 * Math.PI);
  ctx.stroke();
}

export function drawTopDown(
  ctx: CanvasRenderingContext2D, clip: MotionClip, frame: number,
  target: [number, number][] | null, width: number, height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const path = clip.root_xz as [number, number][];
  const polys: [string, [number, number][]][] = [["#9ca3af", path]];
  if (target) {
    polys.unshift(["#fca5a5", target]);
  }
  for (const [color, poly] of polys) {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    poly.forEach(([x, y], i) => {
      const [px, py] = worldToCanvas(x, y, width, height);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  const [hx, hy] = worldToCanvas(path[frame][0], path[frame][1], width, height);
  ctx.fillStyle = "#1d4ed8";
  ctx.beginPath();
  ctx.arc(hx, hy, 5, 0, 2 * Math.PI);
  ctx.fill();
}
