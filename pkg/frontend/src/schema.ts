/**
 * Wire schemas mirroring docs/interface.md. Every request is validated before
 * sending and every response after receiving, so drift between frontend and
 * backend fails loudly in both test suites.
 */
import { z } from "zod";

export const point2 = z.tuple([z.number(), z.number()]).or(
  z.array(z.number()).length(2),
);

export const strokeSchema = z.array(point2).min(2).max(64);

export const stickmanSchema = z.object({
  frame: z.number().int().nonnegative(),
  strokes: z.array(strokeSchema).length(6),
});

export const guidanceOverridesSchema = z.object({
  layer_index: z.number().int().nullish(),
  repeat: z.number().int().nullish(),
  lr: z.number().nullish(),
  eps_md: z.number().nullish(),
  clip_scale: z.number().nullish(),
  enabled: z.boolean().default(true),
});

export const generateRequestSchema = z.object({
  text: z.string().nullable(),
  trajectory: z.array(point2).min(2).nullable(),
  timestamps: z.array(z.number()).nullable(),
  stickmen: z.array(stickmanSchema).nullable(),
  length: z.number().int().min(2),
  resample_mode: z.enum(["uniform", "density"]),
  guidance: guidanceOverridesSchema.nullable(),
  seed: z.number().int().nullable(),
});

export const motionClipSchema = z.object({
  version: z.literal(1),
  fps: z.number().positive(),
  skeleton: z.literal("toy17-v1"),
  frames: z.number().int().min(2),
  root_xz: z.array(point2),
  root_yaw: z.array(z.number()),
  local_pose: z.array(z.array(z.array(z.number()).length(3)).length(17)),
  caption: z.array(z.string()),
});

export const generateResponseSchema = z.object({
  motion: motionClipSchema,
  guidance_loss: z.number().nullable(),
  resampled_trajectory: z.array(point2).nullable(),
  seed: z.number().int(),
  timing_ms: z.object({
    encode: z.number(),
    sample: z.number(),
    decode: z.number(),
    total: z.number(),
  }),
});

export const resampleRequestSchema = z.object({
  trajectory: z.array(point2).min(2),
  timestamps: z.array(z.number()).nullable(),
  length: z.number().int().min(2),
  mode: z.enum(["uniform", "density"]),
});

export const resampleResponseSchema = z.object({
  points: z.array(point2),
});

export const healthResponseSchema = z.object({
  status: z.enum(["ready", "loading"]),
  checkpoint_hash: z.string(),
  stats_hash: z.string(),
  layers: z.number().int(),
  uptime_s: z.number(),
});

export type GenerateRequest = z.infer<typeof generateRequestSchema>;
export type GenerateResponse = z.infer<typeof generateResponseSchema>;
export type MotionClip = z.infer<typeof motionClipSchema>;
export type StickmanPayload = z.infer<typeof stickmanSchema>;
