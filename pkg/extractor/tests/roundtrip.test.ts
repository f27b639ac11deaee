/**
 * Acceptance round-trip: extractor output must validate under the primary
 * toolkit's dataset reader, consumed only through its command-line interface.
 */

import { execFileSync } from "node:child_process";
import { mkdtemp, readFile, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { beforeAll, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import type { HeaderJson, RecordJson } from "../src/types.js";

let dir: string;
let output: string;

function fixtureBytes(bytes: number, seed: number): Buffer {
  const buf = Buffer.alloc(bytes);
  for (let i = 0; i < bytes; i++) buf[i] = (i * 17 + seed * 101) % 256;
  return buf;
}

beforeAll(async () => {
  dir = await mkdtemp(join(tmpdir(), "roundtrip-"));
  // ten images across five prompts; sizes chosen so detections vary (incl. zero)
  const sizes = [1024, 2048, 700, 300, 128, 4096, 1600, 900, 2600, 512];
  const rows = ["image_path,prompt_id,target_count,tag"];
  for (let i = 0; i < 10; i++) {
    const path = join(dir, `img${i}.png`);
    await writeFile(path, fixtureBytes(sizes[i], i));
    const prompt = `p${Math.floor(i / 2)}`;
    const target = 2 + (Math.floor(i / 2) % 3);
    const tag = i % 2 === 0 ? "plain" : "varied";
    rows.push(`${path},${prompt},${target},${tag}`);
  }
  const manifest = join(dir, "manifest.csv");
  await writeFile(manifest, rows.join("\n") + "\n");

  output = join(dir, "faces.jsonl");
  const code = await main([
    "--manifest", manifest,
    "--output", output,
    "--backend", "synthetic",
    "--threshold", "0.7",
    "--batch-size", "4",
  ]);
  expect(code).toBe(0);
});

describe("extractor output against the primary toolkit", () => {
  it("validates under the dataset reader with zero errors", async () => {
    // `disco evaluate` parses and validates the file before computing metrics
    const report = join(dir, "report.json");
    execFileSync("disco", ["evaluate", "--input", output, "--output", report]);
    // the reward pipeline consumes the same groups; extracted datasets carry
    // no quality scores, so score them with the quality weight disabled
    const cfg = join(dir, "noquality.cfg");
    await writeFile(
      cfg,
      "rewards.alpha = 0.6\nrewards.beta = 0.2\nrewards.gamma = 0.2\nrewards.zeta = 0\n",
    );
    execFileSync("disco", [
      "reward", "--input", output,
      "--output", join(dir, "breakdowns.jsonl"),
      "--config", cfg,
    ]);
  });

  it("quality-weighted scoring of quality-less data fails as a validation error", () => {
    let status = 0;
    try {
      execFileSync("disco", [
        "reward", "--input", output,
        "--output", join(dir, "void.jsonl"),
        "--preset", "appendix-d",
      ]);
    } catch (err) {
      status = (err as { status: number }).status;
    }
    expect(status).toBe(1);
  });

  it("produces a metrics report over all ten records", async () => {
    const report = join(dir, "report2.json");
    execFileSync("disco", ["evaluate", "--input", output, "--output", report]);
    const parsed = JSON.parse(await readFile(report, "utf-8"));
    expect(parsed.n_images).toBe(10);
    expect(parsed.per_tag).toBeDefined();
  });

  it("keeps every embedding unit-norm within 1e-4", async () => {
    const lines = (await readFile(output, "utf-8")).trim().split("\n");
    const records = lines.slice(1).map((l) => JSON.parse(l) as RecordJson);
    expect(records).toHaveLength(10);
    let faces = 0;
    for (const record of records) {
      for (const face of record.faces) {
        faces += 1;
        expect(Math.abs(Math.hypot(...face.embedding) - 1)).toBeLessThan(1e-4);
      }
    }
    expect(faces).toBeGreaterThan(0);
  });

  it("keeps every confidence at or above the header threshold of 0.7", async () => {
    const lines = (await readFile(output, "utf-8")).trim().split("\n");
    const header = JSON.parse(lines[0]) as HeaderJson;
    expect(header.det_threshold).toBe(0.7);
    for (const line of lines.slice(1)) {
      const record = JSON.parse(line) as RecordJson;
      for (const face of record.faces) {
        expect(face.confidence).toBeGreaterThanOrEqual(0.7);
      }
    }
  });

  it("reruns of the same job produce identical embeddings", async () => {
    const second = join(dir, "faces2.jsonl");
    const manifest = join(dir, "manifest.csv");
    const code = await main([
      "--manifest", manifest,
      "--output", second,
      "--backend", "synthetic",
    ]);
    expect(code).toBe(0);
    expect(await readFile(second, "utf-8")).toBe(await readFile(output, "utf-8"));
  });
});
