/** JSON checkpoints: dims, vocabulary, parameters, and the training curve.
 *
 * The checkpoint identifier is a content hash over everything the model's
 * behavior depends on, so /info reports something meaningful for
 * reproducibility records.
 */

import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";

import { CaptionModel, ModelDims } from "./model";
import { Tensor } from "./tensor";
import { Tokenizer } from "./tokenizer";

export const MODEL_NAME = "mini-story-grounded-captioner";

export interface CurvePoint {
  step: number;
  lr: number;
  loss: number;
}

export interface CheckpointFile {
  format: 1;
  identifiers: { model: string; checkpoint: string };
  dims: ModelDims;
  vocab: string[];
  params: Record<string, { rows: number; cols: number; data: number[] }>;
  curve: CurvePoint[];
}

function contentHash(dims: ModelDims, vocab: string[], params: CheckpointFile["params"]): string {
  return createHash("sha256")
    .update(JSON.stringify({ dims, vocab, params }))
    .digest("hex")
    .slice(0, 12);
}

export function saveCheckpoint(path: string, model: CaptionModel, curve: CurvePoint[]): string {
  const params: CheckpointFile["params"] = {};
  for (const [name, tensor] of model.params) {
    params[name] = { rows: tensor.rows, cols: tensor.cols, data: [...tensor.data] };
  }
  const id = contentHash(model.dims, model.tokenizer.words, params);
  const file: CheckpointFile = {
    format: 1,
    identifiers: { model: MODEL_NAME, checkpoint: id },
    dims: model.dims,
    vocab: model.tokenizer.words,
    params,
    curve,
  };
  writeFileSync(path, JSON.stringify(file) + "\n");
  return id;
}

export function loadCheckpoint(path: string): CheckpointFile {
  const file = JSON.parse(readFileSync(path, "utf8")) as CheckpointFile;
  if (file.format !== 1) throw new Error(`unsupported checkpoint format ${file.format}`);
  return file;
}

export function modelFromCheckpoint(file: CheckpointFile): CaptionModel {
  const params = new Map<string, Tensor>();
  for (const [name, stored] of Object.entries(file.params)) {
    params.set(name, new Tensor(stored.rows, stored.cols, Float64Array.from(stored.data)));
  }
  return new CaptionModel(file.dims, new Tokenizer(file.vocab), params);
}
