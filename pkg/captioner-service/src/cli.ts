/** `captioner-service train ...` and `captioner-service serve ...`. */

import { parseArgs } from "node:util";

import { serve } from "./server";
import { train, ResolutionMismatchError, SchemaError, TrainConfig } from "./train";

function usage(): never {
  console.error(
    [
      "usage:",
      "  train --triplets FILE --images-root DIR --out CKPT [--base CKPT]",
      "        [--epochs N] [--batch N] [--peak-lr X] [--weight-decay X]",
      "        [--resolution N] [--seed N]",
      "  serve --checkpoint CKPT [--port N]",
    ].join("\n"),
  );
  process.exit(2);
}

function runTrain(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      triplets: { type: "string" },
      "images-root": { type: "string" },
      out: { type: "string" },
      base: { type: "string" },
      epochs: { type: "string" },
      batch: { type: "string" },
      "peak-lr": { type: "string" },
      "weight-decay": { type: "string" },
      resolution: { type: "string" },
      seed: { type: "string" },
    },
  });
  if (!values.triplets || !values["images-root"] || !values.out) usage();
  const overrides: Partial<TrainConfig> = {};
  if (values.epochs) overrides.epochs = Number(values.epochs);
  if (values.batch) overrides.batchSize = Number(values.batch);
  if (values["peak-lr"]) overrides.peakLr = Number(values["peak-lr"]);
  if (values["weight-decay"]) overrides.weightDecay = Number(values["weight-decay"]);
  if (values.resolution) overrides.resolution = Number(values.resolution);
  if (values.seed) overrides.seed = Number(values.seed);
  try {
    const result = train({
      tripletsPath: values.triplets,
      imagesRoot: values["images-root"],
      outPath: values.out,
      basePath: values.base,
      config: overrides,
    });
    const first = result.curve[0]!;
    const last = result.curve[result.curve.length - 1]!;
    console.log(
      `checkpoint ${result.checkpointId} -> ${result.outPath} ` +
        `(${result.curve.length} steps, loss ${first.loss.toFixed(4)} -> ${last.loss.toFixed(4)})`,
    );
    return 0;
  } catch (err) {
    if (err instanceof SchemaError || err instanceof ResolutionMismatchError) {
      console.error(`train failed: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

async function runServe(argv: string[]): Promise<number> {
  const { values } = parseArgs({
    args: argv,
    options: {
      checkpoint: { type: "string" },
      port: { type: "string", default: "8378" },
    },
  });
  if (!values.checkpoint) usage();
  const running = await serve(values.checkpoint, Number(values.port));
  console.log(`listening on :${running.port} (checkpoint ${values.checkpoint})`);
  return 0;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "train") return runTrain(rest);
  if (command === "serve") return runServe(rest);
  usage();
}

main().then(
  (code) => {
    if (code !== 0) process.exit(code);
  },
  (err) => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  },
);
