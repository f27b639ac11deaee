/**
 * The extraction pipeline: read each image, detect faces, filter by
 * confidence, crop with a 10% margin, encode identities, and write one
 * disco/1 record per image. Per-image failures become zero-face records so a
 * bad file never aborts the batch.
 */

import { readFile, writeFile } from "node:fs/promises";
import { basename } from "node:path";

import { createBackend } from "./backends.js";
import type {
  DetectedBox,
  DetectorEncoder,
  ExtractionJob,
  FaceJson,
  HeaderJson,
  ManifestEntry,
  RecordJson,
} from "./types.js";

/** Expand a detector box by a relative margin before encoding. */
export function padBox(box: DetectedBox, margin = 0.1): DetectedBox {
  const w = box.x1 - box.x0;
  const h = box.y1 - box.y0;
  return {
    x0: Math.max(0, box.x0 - margin * w),
    y0: Math.max(0, box.y0 - margin * h),
    x1: box.x1 + margin * w,
    y1: box.y1 + margin * h,
    confidence: box.confidence,
  };
}

function normalize(vec: number[]): number[] {
  const norm = Math.hypot(...vec);
  if (norm <= 1e-12) {
    throw new Error("encoder produced a zero embedding");
  }
  return vec.map((x) => x / norm);
}

async function extractOne(
  backend: DetectorEncoder,
  entry: ManifestEntry,
  threshold: number,
): Promise<RecordJson> {
  const record: RecordJson = {
    image_id: basename(entry.imagePath),
    prompt_id: entry.promptId,
    target_count: entry.targetCount,
    ...(entry.tag ? { tag: entry.tag } : {}),
    faces: [],
  };
  try {
    const image = await readFile(entry.imagePath);
    const boxes = (await backend.detect(image))
      .filter((box) => box.confidence >= threshold)
      .sort((a, b) => b.confidence - a.confidence);
    const faces: FaceJson[] = [];
    for (const box of boxes) {
      const embedding = normalize(await backend.encode(image, padBox(box)));
      faces.push({
        embedding,
        confidence: box.confidence,
        bbox: [box.x0, box.y0, box.x1, box.y1],
      });
    }
    record.faces = faces;
  } catch (err) {
    console.error(
      `extract: ${entry.imagePath}: ${(err as Error).message}; emitting zero-face record`,
    );
    record.faces = [];
  }
  return record;
}

/** Run tasks over entries with bounded parallelism, keeping manifest order. */
async function mapPool<T, R>(
  items: T[],
  limit: number,
  fn: (item: T) => Promise<R>,
): Promise<R[]> {
  const results = new Array<R>(items.length);
  let next = 0;
  const workers = Array.from({ length: Math.max(1, limit) }, async () => {
    for (;;) {
      const i = next++;
      if (i >= items.length) return;
      results[i] = await fn(items[i]);
    }
  });
  await Promise.all(workers);
  return results;
}

export async function runJob(job: ExtractionJob): Promise<RecordJson[]> {
  const backend = createBackend(job.backend);
  const records = await mapPool(job.entries, job.batchSize, (entry) =>
    extractOne(backend, entry, job.threshold),
  );

  const header: HeaderJson = {
    format_version: "disco/1",
    embedding_dim: backend.dim,
    det_threshold: job.threshold,
    producer: `disco-extractor/0.1.0 (${backend.name})`,
  };
  const lines = [JSON.stringify(header), ...records.map((r) => JSON.stringify(r))];
  await writeFile(job.outputPath, lines.join("\n") + "\n", "utf-8");
  return records;
}
