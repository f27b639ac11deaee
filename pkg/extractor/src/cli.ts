#!/usr/bin/env node
/**
 * disco-extract: turn a manifest of images into a disco/1 JSONL dataset.
 *
 *   disco-extract --manifest images.csv --output faces.jsonl \
 *       [--backend synthetic|retinaface-arcface] [--threshold 0.7] \
 *       [--device cpu] [--batch-size 4]
 */

import { parseArgs } from "node:util";

import { runJob } from "./extract.js";
import { readManifest } from "./manifest.js";

export async function main(argv: string[]): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        manifest: { type: "string" },
        output: { type: "string" },
        backend: { type: "string", default: "retinaface-arcface" },
        threshold: { type: "string", default: "0.7" },
        device: { type: "string", default: "cpu" },
        "batch-size": { type: "string", default: "4" },
      },
      strict: true,
    }));
  } catch (err) {
    console.error(`disco-extract: ${(err as Error).message}`);
    return 1;
  }
  if (!values.manifest || !values.output) {
    console.error("disco-extract: --manifest and --output are required");
    return 1;
  }
  const threshold = Number(values.threshold);
  if (!(threshold >= 0 && threshold <= 1)) {
    console.error("disco-extract: --threshold must lie in [0, 1]");
    return 1;
  }
  const batchSize = Number(values["batch-size"]);
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    console.error("disco-extract: --batch-size must be a positive integer");
    return 1;
  }

  try {
    const entries = await readManifest(values.manifest);
    const records = await runJob({
      entries,
      threshold,
      outputPath: values.output,
      backend: values.backend!,
      device: values.device!,
      batchSize,
    });
    const nFaces = records.reduce((acc, r) => acc + r.faces.length, 0);
    console.log(
      `wrote ${records.length} records / ${nFaces} faces to ${values.output}`,
    );
    return 0;
  } catch (err) {
    console.error(`disco-extract: ${(err as Error).message}`);
    return 1;
  }
}

const isDirectRun =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
