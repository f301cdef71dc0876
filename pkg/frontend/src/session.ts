/**
 * Single-user session: one trajectory, anchored stickmen, prompt, last
 * response. One generation request in flight at a time; a newer submission
 * cancels and replaces the pending one.
 */

import { Client } from "./api.js";
import { GenerateRequest, GenerateResponse, StickmanPayload } from "./schema.js";

export interface SessionState {
  trajectory: [number, number][] | null;
  timestamps: number[] | null;
  stickmen: StickmanPayload[];
  prompt: string;
  length: number;
  resampleMode: "uniform" | "density";
  lastResponse: GenerateResponse | null;
  replaySeed: number | null;
}

export function emptySession(length = 60): SessionState {
  return {
    trajectory: null,
    timestamps: null,
    stickmen: [],
    prompt: "",
    length,
    resampleMode: "uniform",
    lastResponse: null,
    replaySeed: null,
  };
}

/** Anchoring at an occupied frame replaces the previous sketch there. */
export function placeStickman(state: SessionState, placed: StickmanPayload): SessionState {
  const stickmen = state.stickmen.filter((s) => s.frame !== placed.frame);
  stickmen.push(placed);
  stickmen.sort((a, b) => a.frame - b.frame);
  return { ...state, stickmen };
}

export function buildRequest(state: SessionState, seed: number | null): GenerateRequest {
  return {
    text: state.prompt.trim() === "" ? null : state.prompt.trim().toLowerCase(),
    trajectory: state.trajectory,
    timestamps: state.trajectory === null ? null : state.timestamps,
    stickmen: state.stickmen.length > 0 ? state.stickmen : null,
    length: state.length,
    resample_mode: state.resampleMode,
    guidance: null,
    seed,
  };
}

/** Serializes generation requests: a newer submit cancels the pending one. */
export class GenerationRunner {
  private epoch = 0;

  constructor(private client: Client) {}

  async submit(state: SessionState, seed: number | null): Promise<GenerateResponse | null> {
    const mine = ++this.epoch;
    const response = await this.client.generate(buildRequest(state, seed));
    if (mine !== this.epoch) {
      return null; // superseded while in flight
    }
    return response;
  }

  async replay(state: SessionState): Promise<GenerateResponse | null> {
    if (state.replaySeed === null) {
      throw new Error("no stored seed to replay");
    }
    return this.submit(state, state.replaySeed);
  }
}
