/** Shared fixtures: a tiny triplet corpus on disk, a smoke checkpoint, and
 * plumbing for driving the HTTP app over a real ephemeral-port socket. */

import { mkdtempSync, writeFileSync, mkdirSync } from "node:fs";
import type { Server } from "node:http";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { Express } from "express";

import { loadCheckpoint, modelFromCheckpoint } from "../src/checkpoint";
import { ServerState } from "../src/server";
import { train, TrainConfig, TrainResult } from "../src/train";

export interface TripletRow {
  image_ref: string;
  noisy_story: string;
  detailed_caption: string;
}

export const STORIES: Array<[string, string]> = [
  ["a bright morning walk by the calm sea", "a bright morning walk where waves glitter over white sand"],
  ["a sad rainy day in the old town", "a sad rainy day with umbrellas crowding the cobbled square"],
  ["the happy dog runs across the warm field", "the happy dog runs chasing swallows across the warm field"],
  ["a cold night under tall dark pines", "a cold night where a campfire crackles under tall dark pines"],
  ["friends laugh around a small wooden table", "friends laugh sharing bread around a small wooden table"],
  ["the quiet river bends past the mill", "the quiet river bends carrying leaves past the creaking mill"],
  ["a young rider climbs the steep bright hill", "a young rider climbs pedaling hard up the steep bright hill"],
  ["lanterns glow above the busy night market", "lanterns glow swaying above the busy fragrant night market"],
];

export function writeCorpus(count = STORIES.length): { dir: string; tripletsPath: string } {
  const dir = mkdtempSync(join(tmpdir(), "captioner-"));
  mkdirSync(join(dir, "images"));
  const rows: string[] = [];
  for (let i = 0; i < count; i++) {
    const [story, caption] = STORIES[i % STORIES.length]!;
    const ref = join("images", `img_${i}.bin`);
    // deterministic distinct byte patterns stand in for real photos
    const bytes = Buffer.from(Array.from({ length: 192 }, (_, j) => (i * 37 + j * 11) % 256));
    writeFileSync(join(dir, ref), bytes);
    rows.push(
      JSON.stringify({ image_ref: ref, noisy_story: story, detailed_caption: caption }),
    );
  }
  const tripletsPath = join(dir, "triplets.jsonl");
  writeFileSync(tripletsPath, rows.join("\n") + "\n");
  return { dir, tripletsPath };
}

export const SMOKE_CONFIG: Partial<TrainConfig> = {
  epochs: 1,
  batchSize: 2,
  peakLr: 0.01,
  seed: 5,
};

export function trainSmoke(config: Partial<TrainConfig> = {}): {
  dir: string;
  result: TrainResult;
} {
  const { dir, tripletsPath } = writeCorpus(8);
  const outPath = join(dir, "smoke.ckpt.json");
  const result = train({
    tripletsPath,
    imagesRoot: dir,
    outPath,
    config: { ...SMOKE_CONFIG, ...config },
  });
  return { dir, result };
}

/** Server state as it looks after the checkpoint finished loading. */
export function readyStateFrom(checkpointPath: string): ServerState {
  const file = loadCheckpoint(checkpointPath);
  return {
    ready: true,
    model: modelFromCheckpoint(file),
    checkpointId: file.identifiers.checkpoint,
  };
}

export function listen(app: Express): Promise<{ server: Server; baseUrl: string }> {
  return new Promise((resolve, reject) => {
    const server = app.listen(0, () => {
      const address = server.address();
      if (typeof address !== "object" || address === null) {
        reject(new Error("listen(0) gave no bound address"));
        return;
      }
      resolve({ server, baseUrl: `http://127.0.0.1:${address.port}` });
    });
    server.on("error", reject);
  });
}

export async function requestJson(
  baseUrl: string,
  method: string,
  path: string,
  body?: unknown,
): Promise<{ status: number; json: Record<string, unknown> }> {
  const response = await fetch(baseUrl + path, {
    method,
    headers: body === undefined ? undefined : { "content-type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  return { status: response.status, json: (await response.json()) as Record<string, unknown> };
}
