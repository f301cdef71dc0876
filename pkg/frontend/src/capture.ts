/** Pointer capture for the trajectory canvas and the stickman mini-canvas. */

import { PointerSample } from "./geometry.js";

export type StrokeListener = (samples: PointerSample[]) => void;

/**
 * Records one stroke per pointer-down..pointer-up gesture and reports it.
 * Single-sample strokes are discarded (the listener never fires for them).
 */
export class StrokeRecorder {
  private samples: PointerSample[] = [];
  private active = false;

  constructor(private onStroke: StrokeListener,
              private onDiscard?: () => void) {}

  down(x: number, y: number, t_ms: number): void {
    this.active = true;
    this.samples = [{ x, y, t_ms }];
  }

  move(x: number, y: number, t_ms: number): void {
    if (this.active) {
      this.samples.push({ x, y, t_ms });
    }
  }

  up(): void {
    if (!this.active) return;
    this.active = false;
    if (this.samples.length < 2) {
      this.onDiscard?.();
      return;
    }
    this.onStroke(this.samples);
  }
}

/** Collects exactly six strokes; submission stays blocked until then. */
export class StickmanCollector {
  strokes: [number, number][][] = [];

  add(stroke: [number, number][]): void {
    if (this.strokes.length >= 6) {
      throw new Error("a stickman has exactly six strokes; clear to redraw");
    }
    this.strokes.push(stroke);
  }

  undo(): void {
    this.strokes.pop();
  }

  clear(): void {
    this.strokes = [];
  }

  get count(): number {
    return this.strokes.length;
  }

  get complete(): boolean {
    return this.strokes.length === 6;
  }
}
