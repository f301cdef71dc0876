/** Backend client; all payloads validated against the shared schemas. */

import {
  GenerateRequest,
  GenerateResponse,
  generateRequestSchema,
  generateResponseSchema,
  healthResponseSchema,
  resampleRequestSchema,
  resampleResponseSchema,
} from "./schema.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`backend error ${status}: ${JSON.stringify(detail)}`);
  }
}

export class Client {
  constructor(public baseUrl: string) {}

  private async post(path: string, body: unknown): Promise<unknown> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, payload.detail ?? payload);
    }
    return payload;
  }

  async health() {
    const resp = await fetch(this.baseUrl + "/health");
    return healthResponseSchema.parse(await resp.json());
  }

  async resample(
    trajectory: [number, number][],
    timestamps: number[] | null,
    length: number,
    mode: "uniform" | "density",
  ): Promise<[number, number][]> {
    const body = resampleRequestSchema.parse({ trajectory, timestamps, length, mode });
    const payload = await this.post("/resample", body);
    return resampleResponseSchema.parse(payload).points as [number, number][];
  }

  async generate(req: GenerateRequest): Promise<GenerateResponse> {
    const body = generateRequestSchema.parse(req);
    const payload = await this.post("/generate", body);
    return generateResponseSchema.parse(payload);
  }
}
