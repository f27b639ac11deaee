/**
 * Detector/encoder backends.
 *
 * "retinaface-arcface" is the default production wiring and needs ONNX model
 * assets plus onnxruntime-node at runtime; "synthetic" derives deterministic
 * detections and embeddings from the image bytes alone, which makes pipelines
 * testable on machines without model weights.
 */

import { createHash } from "node:crypto";

import type { DetectedBox, DetectorEncoder } from "./types.js";

/** Deterministic 32-bit PRNG (mulberry32). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seedFrom(...parts: (Buffer | string)[]): number {
  const h = createHash("sha256");
  for (const p of parts) h.update(p);
  return h.digest().readUInt32LE(0);
}

/**
 * Deterministic stand-in backend: the number of faces grows with the image
 * size (one per 256 bytes, at most four), boxes and confidences come from a
 * PRNG seeded by the image bytes, and each embedding is seeded by the image
 * bytes plus its box. Confidences span [0.5, 1) so threshold filtering is
 * exercised.
 */
export class SyntheticBackend implements DetectorEncoder {
  readonly name = "synthetic";
  readonly dim: number;

  constructor(dim = 16) {
    this.dim = dim;
  }

  async detect(image: Buffer): Promise<DetectedBox[]> {
    const count = Math.min(4, Math.floor(image.length / 256));
    const rand = mulberry32(seedFrom(image, "detect"));
    const boxes: DetectedBox[] = [];
    for (let i = 0; i < count; i++) {
      const x0 = Math.floor(rand() * 400);
      const y0 = Math.floor(rand() * 400);
      boxes.push({
        x0,
        y0,
        x1: x0 + 32 + Math.floor(rand() * 80),
        y1: y0 + 32 + Math.floor(rand() * 80),
        confidence: 0.5 + 0.5 * rand(),
      });
    }
    return boxes;
  }

  async encode(image: Buffer, box: DetectedBox): Promise<number[]> {
    const rand = mulberry32(
      seedFrom(image, `box:${box.x0},${box.y0},${box.x1},${box.y1}`),
    );
    const raw: number[] = [];
    for (let i = 0; i < this.dim; i++) {
      // Box-Muller for roughly Gaussian coordinates
      const u = Math.max(rand(), 1e-12);
      const v = rand();
      raw.push(Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v));
    }
    const norm = Math.hypot(...raw);
    return raw.map((x) => x / norm);
  }
}

/**
 * Placeholder for the real detector/encoder pair. Loading requires ONNX
 * model assets; constructing it without them fails loudly rather than
 * producing fake identities.
 */
export class OnnxBackend implements DetectorEncoder {
  readonly name = "retinaface-arcface";
  readonly dim = 512;

  constructor(detectorModel?: string, encoderModel?: string) {
    throw new Error(
      "retinaface-arcface backend needs onnxruntime-node and model assets " +
        `(detector=${detectorModel ?? "unset"}, encoder=${encoderModel ?? "unset"}); ` +
        "use --backend synthetic for model-free runs",
    );
  }

  detect(): Promise<DetectedBox[]> {
    return Promise.reject(new Error("backend not loaded"));
  }

  encode(): Promise<number[]> {
    return Promise.reject(new Error("backend not loaded"));
  }
}

export function createBackend(name: string): DetectorEncoder {
  switch (name) {
    case "synthetic":
      return new SyntheticBackend();
    case "retinaface-arcface":
      return new OnnxBackend(
        process.env.DISCO_DETECTOR_MODEL,
        process.env.DISCO_ENCODER_MODEL,
      );
    default:
      throw new Error(`unknown backend ${JSON.stringify(name)}`);
  }
}
