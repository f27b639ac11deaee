/** Shared types for the image -> disco/1 extraction pipeline. */

/** One row of the job manifest: an image plus its prompt metadata. */
export interface ManifestEntry {
  imagePath: string;
  promptId: string;
  targetCount: number;
  tag?: string;
}

/** A full extraction job. */
export interface ExtractionJob {
  entries: ManifestEntry[];
  /** Faces below this detector confidence are dropped (also written to the header). */
  threshold: number;
  outputPath: string;
  backend: string;
  device: string;
  batchSize: number;
}

export interface DetectedBox {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  confidence: number;
}

/**
 * The pluggable model pair: a detector producing boxes with confidences and
 * an identity encoder producing one embedding per box.
 */
export interface DetectorEncoder {
  readonly name: string;
  readonly dim: number;
  detect(image: Buffer): Promise<DetectedBox[]>;
  encode(image: Buffer, box: DetectedBox): Promise<number[]>;
}

/** disco/1 face object. */
export interface FaceJson {
  embedding: number[];
  confidence: number;
  bbox?: [number, number, number, number];
}

/** disco/1 image record. */
export interface RecordJson {
  image_id: string;
  prompt_id: string;
  target_count: number;
  tag?: string;
  faces: FaceJson[];
}

/** disco/1 header line. */
export interface HeaderJson {
  format_version: "disco/1";
  embedding_dim: number;
  det_threshold: number;
  producer: string;
}
