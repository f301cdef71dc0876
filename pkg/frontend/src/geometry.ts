/**
 * Pure geometry used by the canvases: pixel<->world mapping for the
 * trajectory, stickman normalization, and nearest-frame anchoring.
 */

export interface PointerSample {
  x: number; // css px inside the canvas
  y: number;
  t_ms: number;
}

/** The trajectory canvas spans this many meters horizontally. */
export const CANVAS_WORLD_METERS = 8;

/** Canvas px -> world meters: origin at canvas center, y axis flipped. */
export function canvasToWorld(
  px: number, py: number, width: number, height: number,
): [number, number] {
  const scale = CANVAS_WORLD_METERS / width;
  return [(px - width / 2) * scale, -(py - height / 2) * scale];
}

export function worldToCanvas(
  wx: number, wy: number, width: number, height: number,
): [number, number] {
  const scale = width / CANVAS_WORLD_METERS;
  return [wx * scale + width / 2, height / 2 - wy * scale];
}

/** Raw stroke in world meters plus millisecond timestamps (kept for
 * density resampling). Timestamps are shifted to start at 0 and forced
 * strictly increasing, which pointer hardware does not always guarantee. */
export function strokeToTrajectory(
  samples: PointerSample[], width: number, height: number,
): { trajectory: [number, number][]; timestamps: number[] } {
  const trajectory = samples.map((s) => canvasToWorld(s.x, s.y, width, height));
  const timestamps: number[] = [];
  let last = -1;
  for (const s of samples) {
    const t = s.t_ms - samples[0].t_ms;
    const next = t > last ? t : last + 1e-3;
    timestamps.push(next);
    last = next;
  }
  return { trajectory, timestamps };
}

/** Normalize strokes so the joint bounding box fits [-0.9, 0.9]^2,
 * preserving aspect ratio; matches the training-data convention. */
export function normalizeSketch(strokes: [number, number][][]): [number, number][][] {
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const stroke of strokes) {
    for (const [x, y] of stroke) {
      minX = Math.min(minX, x); maxX = Math.max(maxX, x);
      minY = Math.min(minY, y); maxY = Math.max(maxY, y);
    }
  }
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  const span = Math.max(maxX - minX, maxY - minY, 1e-9);
  const scale = 1.8 / span;
  // canvas y grows downward; drawing-box y grows upward
  return strokes.map((stroke) =>
    stroke.map(([x, y]) => [(x - cx) * scale, -(y - cy) * scale]),
  );
}

/** Index of the preview point nearest to a click (world coords). */
export function nearestFrameIndex(
  preview: [number, number][], wx: number, wy: number,
): number {
  let best = 0;
  let bestDist = Infinity;
  preview.forEach(([x, y], i) => {
    const d = (x - wx) ** 2 + (y - wy) ** 2;
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  });
  return best;
}

/** Orthographic frontal projection of one pose (canonical frame drops z). */
export function frontalSegments(
  pose: number[][], parents: number[],
): [number, number, number, number][] {
  const out: [number, number, number, number][] = [];
  for (let j = 1; j < parents.length; j++) {
    const p = parents[j];
    out.push([pose[p][0], pose[p][1], pose[j][0], pose[j][1]]);
  }
  return out;
}

/** Parent indices of the 17-joint skeleton (see docs/interface.md). */
export const SKELETON_PARENTS = [0, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15];
