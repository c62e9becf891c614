/** Training entry point: triplet file -> checkpoint with a per-step loss curve.
 *
 * Each triplet row is {image_ref, noisy_story, detailed_caption}; image_ref
 * resolves relative to an images root. The objective is teacher-forced
 * next-token LM loss on the detailed caption conditioned on (image, story).
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { z } from "zod";

import { loadCheckpoint, modelFromCheckpoint, saveCheckpoint, CurvePoint } from "./checkpoint";
import { patchFeatures } from "./image";
import { CaptionModel, ModelDims } from "./model";
import { AdamW, cosineLr } from "./optim";
import { Rng } from "./rng";
import { Tape, Tensor, addAll, scale } from "./tensor";
import { Tokenizer } from "./tokenizer";

export class SchemaError extends Error {}
export class ResolutionMismatchError extends Error {}

export interface TrainConfig {
  resolution: number;
  batchSize: number;
  epochs: number;
  peakLr: number;
  weightDecay: number;
  seed: number;
  dModel: number;
  grid: number;
  maxStory: number;
  maxCaption: number;
}

export const DEFAULT_TRAIN_CONFIG: TrainConfig = {
  resolution: 480,
  batchSize: 12,
  epochs: 15,
  peakLr: 2e-5,
  weightDecay: 0.05,
  seed: 0,
  dModel: 24,
  grid: 3,
  maxStory: 24,
  maxCaption: 20,
};

const INTEGRAL: Array<keyof TrainConfig> = [
  "resolution",
  "batchSize",
  "epochs",
  "seed",
  "dModel",
  "grid",
  "maxStory",
  "maxCaption",
];

export function validateTrainConfig(config: TrainConfig): void {
  for (const [key, value] of Object.entries(config)) {
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new SchemaError(`config ${key} must be a finite number`);
    }
    if (key !== "seed" && value <= 0) {
      throw new SchemaError(`config ${key} must be positive`);
    }
  }
  if (config.seed < 0) throw new SchemaError("config seed must be non-negative");
  for (const key of INTEGRAL) {
    if (!Number.isInteger(config[key])) throw new SchemaError(`config ${key} must be an integer`);
  }
  if (config.grid > config.resolution) {
    throw new SchemaError("grid cannot exceed resolution");
  }
}

const tripletSchema = z
  .object({
    image_ref: z.string().min(1),
    noisy_story: z.string().min(1),
    detailed_caption: z.string().min(1),
  })
  .refine((row) => row.noisy_story !== row.detailed_caption, {
    message: "noisy_story must differ from detailed_caption",
  });

export interface Triplet {
  image_ref: string;
  noisy_story: string;
  detailed_caption: string;
}

export function readTriplets(path: string): Triplet[] {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (err) {
    throw new SchemaError(`cannot read triplet file ${path}: ${(err as Error).message}`);
  }
  const lines = text.split("\n").filter((line) => line.trim().length > 0);
  if (lines.length === 0) throw new SchemaError(`triplet file ${path} is empty`);
  return lines.map((line, i) => {
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch {
      throw new SchemaError(`triplet line ${i + 1} is not JSON`);
    }
    const parsed = tripletSchema.safeParse(row);
    if (!parsed.success) {
      throw new SchemaError(`triplet line ${i + 1}: ${parsed.error.issues[0]?.message}`);
    }
    return parsed.data;
  });
}

export interface TrainOptions {
  tripletsPath: string;
  imagesRoot: string;
  outPath: string;
  basePath?: string;
  config?: Partial<TrainConfig>;
}

export interface TrainResult {
  checkpointId: string;
  outPath: string;
  curve: CurvePoint[];
  vocabSize: number;
}

export function train(options: TrainOptions): TrainResult {
  const config: TrainConfig = { ...DEFAULT_TRAIN_CONFIG, ...options.config };
  validateTrainConfig(config);
  const triplets = readTriplets(options.tripletsPath);

  const images = triplets.map((triplet) => {
    const path = join(options.imagesRoot, triplet.image_ref);
    let bytes: Buffer;
    try {
      bytes = readFileSync(path);
    } catch {
      throw new SchemaError(`image_ref ${triplet.image_ref} does not resolve under ${options.imagesRoot}`);
    }
    if (bytes.length === 0) throw new SchemaError(`image_ref ${triplet.image_ref} is empty`);
    return bytes;
  });

  let model: CaptionModel;
  if (options.basePath) {
    const base = loadCheckpoint(options.basePath);
    if (base.dims.resolution !== config.resolution) {
      throw new ResolutionMismatchError(
        `base checkpoint expects resolution ${base.dims.resolution}, config says ${config.resolution}`,
      );
    }
    model = modelFromCheckpoint(base);
  } else {
    const tokenizer = Tokenizer.build(
      triplets.flatMap((t) => [t.noisy_story, t.detailed_caption]),
    );
    const dims: ModelDims = {
      resolution: config.resolution,
      grid: config.grid,
      dModel: config.dModel,
      maxStory: config.maxStory,
      maxCaption: config.maxCaption,
    };
    model = CaptionModel.init(dims, tokenizer, new Rng(config.seed));
  }

  const feats: Tensor[] = images.map((bytes) =>
    patchFeatures(bytes, model.dims.resolution, model.dims.grid),
  );
  const stories = triplets.map((t) => model.tokenizer.encode(t.noisy_story, model.dims.maxStory));
  const captions = triplets.map((t) =>
    model.tokenizer.encode(t.detailed_caption, model.dims.maxCaption),
  );

  const optimizer = new AdamW(model.params, { weightDecay: config.weightDecay });
  const rng = new Rng(config.seed + 1);
  const stepsPerEpoch = Math.ceil(triplets.length / config.batchSize);
  const totalSteps = config.epochs * stepsPerEpoch;
  const curve: CurvePoint[] = [];

  // The logged loss is the dataset-mean LM loss under the parameters entering
  // the step, not the loss of whichever batch was drawn: consecutive points
  // are then comparable, so the curve doubles as the learning-progress probe.
  // At the corpus sizes this model is built for, a full pass is cheap.
  const datasetLoss = (): number => {
    let total = 0;
    for (let i = 0; i < triplets.length; i++) {
      total += model.lossOn(null, feats[i]!, stories[i]!, captions[i]!).data[0]!;
    }
    return total / triplets.length;
  };

  let step = 0;
  for (let epoch = 0; epoch < config.epochs; epoch++) {
    const order = rng.shuffle(triplets.map((_, i) => i));
    for (let start = 0; start < order.length; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize);
      const tape = new Tape();
      const losses = batch.map((i) =>
        model.lossOn(tape, feats[i]!, stories[i]!, captions[i]!),
      );
      const loss = scale(tape, addAll(tape, losses), 1 / batch.length);
      const lr = cosineLr(config.peakLr, step, totalSteps);
      curve.push({ step, lr, loss: datasetLoss() });
      optimizer.zeroGrads();
      tape.backward(loss);
      optimizer.step(lr);
      step++;
    }
  }

  const checkpointId = saveCheckpoint(options.outPath, model, curve);
  return { checkpointId, outPath: options.outPath, curve, vocabSize: model.tokenizer.size };
}
