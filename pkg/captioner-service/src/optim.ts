/** Adam with decoupled weight decay, plus the cosine learning-rate schedule. */

import { Tensor } from "./tensor";

export interface AdamWOptions {
  beta1?: number;
  beta2?: number;
  eps?: number;
  weightDecay: number;
}

export class AdamW {
  private readonly params: Array<[string, Tensor]>;
  private readonly m = new Map<string, Float64Array>();
  private readonly v = new Map<string, Float64Array>();
  private readonly beta1: number;
  private readonly beta2: number;
  private readonly eps: number;
  private readonly weightDecay: number;
  private t = 0;

  constructor(params: Map<string, Tensor>, options: AdamWOptions) {
    this.params = [...params.entries()];
    this.beta1 = options.beta1 ?? 0.9;
    this.beta2 = options.beta2 ?? 0.999;
    this.eps = options.eps ?? 1e-8;
    this.weightDecay = options.weightDecay;
    for (const [name, p] of this.params) {
      this.m.set(name, new Float64Array(p.data.length));
      this.v.set(name, new Float64Array(p.data.length));
    }
  }

  zeroGrads(): void {
    for (const [, p] of this.params) p.zeroGrad();
  }

  step(lr: number): void {
    this.t += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.t);
    const bc2 = 1 - Math.pow(this.beta2, this.t);
    for (const [name, p] of this.params) {
      const g = p.grad;
      const m = this.m.get(name)!;
      const v = this.v.get(name)!;
      for (let i = 0; i < p.data.length; i++) {
        const gi = g ? g[i]! : 0;
        m[i] = this.beta1 * m[i]! + (1 - this.beta1) * gi;
        v[i] = this.beta2 * v[i]! + (1 - this.beta2) * gi * gi;
        const mHat = m[i]! / bc1;
        const vHat = v[i]! / bc2;
        // decay is decoupled: applied to the weight directly, not the gradient
        p.data[i]! -= lr * (mHat / (Math.sqrt(vHat) + this.eps)) + lr * this.weightDecay * p.data[i]!;
      }
    }
  }
}

/** Anneals from `peak` at step 0 down to exactly 0 at `totalSteps`. */
export function cosineLr(peak: number, step: number, totalSteps: number): number {
  if (totalSteps <= 0) throw new Error("totalSteps must be positive");
  const clamped = Math.min(Math.max(step, 0), totalSteps);
  return peak * 0.5 * (1 + Math.cos((Math.PI * clamped) / totalSteps));
}
