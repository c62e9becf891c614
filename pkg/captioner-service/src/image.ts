/** Image payload decoding and the fixed-resolution patch featurizer.
 *
 * Incoming bytes are mapped deterministically onto a resolution x resolution
 * grayscale canvas (byte stream wrapped row-major), then summarized per grid
 * cell as (mean, std, min, max). Any non-empty byte string is therefore a
 * valid image; 422 is reserved for payloads that are not decodable base64.
 */

import { Tensor } from "./tensor";

export const PATCH_FEATURES = 4;

export class UndecodableImageError extends Error {}

const BASE64_SHAPE = /^[A-Za-z0-9+/]+={0,2}$/;

export function decodeImageB64(payload: string): Buffer {
  // Buffer.from(..., "base64") is lenient, so validate the shape ourselves.
  if (payload.length % 4 !== 0 || !BASE64_SHAPE.test(payload)) {
    throw new UndecodableImageError("image_b64 is not valid base64");
  }
  const bytes = Buffer.from(payload, "base64");
  if (bytes.length === 0) {
    throw new UndecodableImageError("image_b64 decodes to zero bytes");
  }
  return bytes;
}

export function patchFeatures(bytes: Buffer, resolution: number, grid: number): Tensor {
  if (bytes.length === 0) throw new Error("empty image bytes");
  if (grid <= 0 || resolution < grid) throw new Error("grid must fit the resolution");
  const cell = Math.floor(resolution / grid);
  const out = new Tensor(grid * grid, PATCH_FEATURES);
  for (let gy = 0; gy < grid; gy++) {
    for (let gx = 0; gx < grid; gx++) {
      let sum = 0;
      let sumSq = 0;
      let min = Infinity;
      let max = -Infinity;
      let count = 0;
      for (let y = gy * cell; y < (gy + 1) * cell; y++) {
        for (let x = gx * cell; x < (gx + 1) * cell; x++) {
          const pixel = bytes[(y * resolution + x) % bytes.length]! / 255;
          sum += pixel;
          sumSq += pixel * pixel;
          min = Math.min(min, pixel);
          max = Math.max(max, pixel);
          count++;
        }
      }
      const mean = sum / count;
      const variance = Math.max(0, sumSq / count - mean * mean);
      const row = gy * grid + gx;
      out.set(row, 0, mean);
      out.set(row, 1, Math.sqrt(variance));
      out.set(row, 2, min);
      out.set(row, 3, max);
    }
  }
  return out;
}
