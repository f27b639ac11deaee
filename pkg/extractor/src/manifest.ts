/** Manifest CSV parsing: image_path, prompt_id, target_count, tag. */

import { readFile } from "node:fs/promises";

import type { ManifestEntry } from "./types.js";

const REQUIRED = ["image_path", "prompt_id", "target_count"] as const;

function splitCsvLine(line: string): string[] {
  // No quoting support needed: paths and ids in manifests are plain tokens.
  return line.split(",").map((cell) => cell.trim());
}

export function parseManifest(text: string): ManifestEntry[] {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith("#"));
  if (lines.length === 0) {
    throw new Error("manifest is empty");
  }
  const header = splitCsvLine(lines[0]);
  for (const column of REQUIRED) {
    if (!header.includes(column)) {
      throw new Error(`manifest missing required column ${JSON.stringify(column)}`);
    }
  }
  const col = (name: string) => header.indexOf(name);

  const entries: ManifestEntry[] = [];
  const seenPaths = new Set<string>();
  for (let i = 1; i < lines.length; i++) {
    const cells = splitCsvLine(lines[i]);
    if (cells.length !== header.length) {
      throw new Error(`manifest line ${i + 1}: expected ${header.length} cells`);
    }
    const imagePath = cells[col("image_path")];
    if (seenPaths.has(imagePath)) {
      throw new Error(`manifest line ${i + 1}: duplicate image_path ${imagePath}`);
    }
    seenPaths.add(imagePath);
    const targetCount = Number(cells[col("target_count")]);
    if (!Number.isInteger(targetCount) || targetCount < 1) {
      throw new Error(`manifest line ${i + 1}: target_count must be an integer >= 1`);
    }
    const tagIdx = col("tag");
    const tag = tagIdx >= 0 ? cells[tagIdx] : "";
    entries.push({
      imagePath,
      promptId: cells[col("prompt_id")],
      targetCount,
      ...(tag ? { tag } : {}),
    });
  }
  return entries;
}

export async function readManifest(path: string): Promise<ManifestEntry[]> {
  return parseManifest(await readFile(path, "utf-8"));
}
