/** HTTP surface: POST /caption, POST /refine, GET /healthz, GET /info.
 *
 * Status contract: 400 for missing/empty fields, 422 for payloads that are
 * not decodable base64, 503 while the checkpoint is still loading. Decoding
 * is greedy, so identical requests against one checkpoint give identical
 * captions. /caption is the story-free path: it conditions on an empty story.
 */

import express, { Express, NextFunction, Request, Response } from "express";
import type { Server } from "node:http";

import { loadCheckpoint, modelFromCheckpoint } from "./checkpoint";
import { decodeImageB64, patchFeatures, UndecodableImageError } from "./image";
import { CaptionModel } from "./model";

export interface ServerState {
  ready: boolean;
  model: CaptionModel | null;
  checkpointId: string;
}

function requireString(body: unknown, field: string): string {
  if (typeof body !== "object" || body === null) {
    throw new FieldError("request body must be a JSON object");
  }
  const value = (body as Record<string, unknown>)[field];
  if (typeof value !== "string" || value.length === 0) {
    throw new FieldError(`field ${field} must be a non-empty string`);
  }
  return value;
}

class FieldError extends Error {}

export function createApp(state: ServerState): Express {
  const app = express();
  app.use(express.json({ limit: "32mb" }));

  const captionWith = (req: Request, res: Response, story: string) => {
    if (!state.ready || state.model === null) {
      res.status(503).json({ error: "model is loading" });
      return;
    }
    const model = state.model;
    const imageB64 = requireString(req.body, "image_b64");
    const bytes = decodeImageB64(imageB64);
    const feats = patchFeatures(bytes, model.dims.resolution, model.dims.grid);
    const storyIds = model.tokenizer.encode(story, model.dims.maxStory);
    res.status(200).json({ caption: model.greedyCaption(feats, storyIds) });
  };

  app.post("/caption", (req, res) => {
    captionWith(req, res, "");
  });

  app.post("/refine", (req, res) => {
    if (state.ready && state.model !== null) {
      // surface field errors (400) before decoding the image
      requireString(req.body, "image_b64");
      const story = requireString(req.body, "story");
      captionWith(req, res, story);
      return;
    }
    res.status(503).json({ error: "model is loading" });
  });

  app.get("/healthz", (_req, res) => {
    res.status(200).json({ status: state.ready ? "ok" : "loading" });
  });

  app.get("/info", (_req, res) => {
    if (!state.ready || state.model === null) {
      res.status(503).json({ error: "model is loading" });
      return;
    }
    res.status(200).json({
      model: "mini-story-grounded-captioner",
      checkpoint: state.checkpointId,
      resolution: state.model.dims.resolution,
      vocab_size: state.model.tokenizer.size,
    });
  });

  // typed failures -> contract status codes; anything else is a 500
  app.use((err: Error, _req: Request, res: Response, next: NextFunction) => {
    if (res.headersSent) {
      next(err);
      return;
    }
    if (err instanceof FieldError) {
      res.status(400).json({ error: err.message });
    } else if (err instanceof UndecodableImageError) {
      res.status(422).json({ error: err.message });
    } else if (err instanceof SyntaxError) {
      res.status(400).json({ error: "request body is not valid JSON" });
    } else {
      res.status(500).json({ error: "internal error" });
    }
  });

  return app;
}

export interface RunningServer {
  server: Server;
  state: ServerState;
  port: number;
}

/** Start listening immediately; flip to ready once the checkpoint is loaded. */
export function serve(checkpointPath: string, port: number): Promise<RunningServer> {
  const state: ServerState = { ready: false, model: null, checkpointId: "" };
  const app = createApp(state);
  return new Promise((resolve, reject) => {
    const server = app.listen(port, () => {
      setImmediate(() => {
        try {
          const file = loadCheckpoint(checkpointPath);
          state.model = modelFromCheckpoint(file);
          state.checkpointId = file.identifiers.checkpoint;
          state.ready = true;
        } catch (err) {
          console.error(`checkpoint load failed: ${(err as Error).message}`);
          server.close();
        }
      });
      const address = server.address();
      const boundPort = typeof address === "object" && address !== null ? address.port : port;
      resolve({ server, state, port: boundPort });
    });
    server.on("error", reject);
  });
}
