/** Training smoke and the triplet/config validation surface. */

import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import {
  DEFAULT_TRAIN_CONFIG,
  ResolutionMismatchError,
  SchemaError,
  readTriplets,
  train,
  validateTrainConfig,
} from "../src/train";
import { trainSmoke, writeCorpus, SMOKE_CONFIG } from "./helpers";

describe("training smoke", () => {
  it("8 triplets, 1 epoch: mean LM loss strictly decreases first to last step", () => {
    const started = Date.now();
    const { result } = trainSmoke();
    const elapsed = Date.now() - started;

    expect(result.curve.length).toBe(4); // 8 triplets / batch 2, 1 epoch
    const first = result.curve[0]!;
    const last = result.curve[result.curve.length - 1]!;
    expect(last.loss).toBeLessThan(first.loss);
    expect(elapsed).toBeLessThan(5 * 60 * 1000);

    // curve is logged per step with the annealing learning rate
    expect(result.curve.map((p) => p.step)).toEqual([0, 1, 2, 3]);
    expect(first.lr).toBeCloseTo(SMOKE_CONFIG.peakLr!, 12);
    for (let i = 1; i < result.curve.length; i++) {
      expect(result.curve[i]!.lr).toBeLessThan(result.curve[i - 1]!.lr);
    }
  }, 300_000);

  it("same seed trains to an identical checkpoint", () => {
    const a = trainSmoke();
    const b = trainSmoke();
    expect(a.result.checkpointId).toBe(b.result.checkpointId);
    expect(readFileSync(a.result.outPath, "utf8")).toBe(
      readFileSync(b.result.outPath, "utf8"),
    );
  });

  it("persists the loss curve inside the checkpoint", () => {
    const { result } = trainSmoke();
    const saved = JSON.parse(readFileSync(result.outPath, "utf8"));
    expect(saved.curve).toEqual(result.curve);
    expect(saved.identifiers.checkpoint).toBe(result.checkpointId);
  });

  it("fine-tuning from a base checkpoint keeps its vocabulary", () => {
    const base = trainSmoke();
    const { dir, tripletsPath } = writeCorpus(4);
    const result = train({
      tripletsPath,
      imagesRoot: dir,
      outPath: join(dir, "tuned.ckpt.json"),
      basePath: base.result.outPath,
      config: SMOKE_CONFIG,
    });
    expect(result.vocabSize).toBe(base.result.vocabSize);
    expect(result.checkpointId).not.toBe(base.result.checkpointId);
  });
});

describe("triplet schema", () => {
  it("rejects an empty triplet file", () => {
    const { dir } = writeCorpus(2);
    const empty = join(dir, "empty.jsonl");
    writeFileSync(empty, "\n\n");
    expect(() => readTriplets(empty)).toThrow(SchemaError);
  });

  it("rejects rows with blank fields or story == caption", () => {
    const { dir } = writeCorpus(2);
    const bad = join(dir, "bad.jsonl");
    writeFileSync(
      bad,
      JSON.stringify({ image_ref: "x", noisy_story: "", detailed_caption: "y" }) + "\n",
    );
    expect(() => readTriplets(bad)).toThrow(SchemaError);
    writeFileSync(
      bad,
      JSON.stringify({ image_ref: "x", noisy_story: "same", detailed_caption: "same" }) + "\n",
    );
    expect(() => readTriplets(bad)).toThrow(SchemaError);
    writeFileSync(bad, "not json\n");
    expect(() => readTriplets(bad)).toThrow(SchemaError);
  });

  it("rejects unresolvable image refs", () => {
    const { dir, tripletsPath } = writeCorpus(2);
    const rows = readFileSync(tripletsPath, "utf8").trim().split("\n");
    const mutated = JSON.parse(rows[0]!);
    mutated.image_ref = "images/vanished.bin";
    writeFileSync(tripletsPath, JSON.stringify(mutated) + "\n");
    expect(() =>
      train({ tripletsPath, imagesRoot: dir, outPath: join(dir, "o.json"), config: SMOKE_CONFIG }),
    ).toThrow(SchemaError);
  });
});

describe("train config", () => {
  it("defaults are the published training recipe", () => {
    expect(DEFAULT_TRAIN_CONFIG.resolution).toBe(480);
    expect(DEFAULT_TRAIN_CONFIG.batchSize).toBe(12);
    expect(DEFAULT_TRAIN_CONFIG.epochs).toBe(15);
    expect(DEFAULT_TRAIN_CONFIG.peakLr).toBe(2e-5);
    expect(DEFAULT_TRAIN_CONFIG.weightDecay).toBe(0.05);
  });

  it("rejects non-positive values", () => {
    expect(() => validateTrainConfig({ ...DEFAULT_TRAIN_CONFIG, epochs: 0 })).toThrow(SchemaError);
    expect(() => validateTrainConfig({ ...DEFAULT_TRAIN_CONFIG, batchSize: -1 })).toThrow(SchemaError);
    expect(() => validateTrainConfig({ ...DEFAULT_TRAIN_CONFIG, peakLr: 0 })).toThrow(SchemaError);
    expect(() => validateTrainConfig({ ...DEFAULT_TRAIN_CONFIG, epochs: 1.5 })).toThrow(SchemaError);
  });

  it("rejects a resolution that disagrees with the base checkpoint", () => {
    const base = trainSmoke();
    const { dir, tripletsPath } = writeCorpus(2);
    expect(() =>
      train({
        tripletsPath,
        imagesRoot: dir,
        outPath: join(dir, "o.json"),
        basePath: base.result.outPath,
        config: { ...SMOKE_CONFIG, resolution: 96 },
      }),
    ).toThrow(ResolutionMismatchError);
  });
});
