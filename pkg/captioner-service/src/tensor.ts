/** Minimal reverse-mode autodiff over dense 2-D Float64 tensors.
 *
 * Ops take an optional Tape; passing null runs pure inference with no
 * gradient bookkeeping, which is what serving uses. The graph is rebuilt
 * every training step, so the tape is just a list of backward closures
 * replayed in reverse.
 */

import { Rng } from "./rng";

export class Tensor {
  readonly rows: number;
  readonly cols: number;
  readonly data: Float64Array;
  grad: Float64Array | null = null;

  constructor(rows: number, cols: number, data?: Float64Array) {
    if (rows <= 0 || cols <= 0) throw new Error(`bad tensor shape ${rows}x${cols}`);
    this.rows = rows;
    this.cols = cols;
    this.data = data ?? new Float64Array(rows * cols);
    if (this.data.length !== rows * cols) {
      throw new Error(`data length ${this.data.length} != ${rows}x${cols}`);
    }
  }

  static zeros(rows: number, cols: number): Tensor {
    return new Tensor(rows, cols);
  }

  static gaussian(rows: number, cols: number, rng: Rng, std: number): Tensor {
    const t = new Tensor(rows, cols);
    for (let i = 0; i < t.data.length; i++) t.data[i] = rng.normal() * std;
    return t;
  }

  static fromRows(rows: number[][]): Tensor {
    const t = new Tensor(rows.length, rows[0]!.length);
    rows.forEach((row, r) => row.forEach((v, c) => t.set(r, c, v)));
    return t;
  }

  get(r: number, c: number): number {
    return this.data[r * this.cols + c]!;
  }

  set(r: number, c: number, v: number): void {
    this.data[r * this.cols + c] = v;
  }

  ensureGrad(): Float64Array {
    if (this.grad === null) this.grad = new Float64Array(this.rows * this.cols);
    return this.grad;
  }

  zeroGrad(): void {
    if (this.grad !== null) this.grad.fill(0);
  }
}

export class Tape {
  private backwardOps: Array<() => void> = [];

  record(op: () => void): void {
    this.backwardOps.push(op);
  }

  /** Seed d(loss)/d(loss) = 1 and replay the graph in reverse. */
  backward(loss: Tensor): void {
    if (loss.rows !== 1 || loss.cols !== 1) throw new Error("loss must be 1x1");
    loss.ensureGrad()[0] = 1;
    for (let i = this.backwardOps.length - 1; i >= 0; i--) this.backwardOps[i]!();
    this.backwardOps.length = 0;
  }
}

/** a (n x k) @ b (k x m) -> n x m */
export function matmul(tape: Tape | null, a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.rows) throw new Error(`matmul ${a.rows}x${a.cols} @ ${b.rows}x${b.cols}`);
  const out = new Tensor(a.rows, b.cols);
  for (let r = 0; r < a.rows; r++) {
    for (let k = 0; k < a.cols; k++) {
      const av = a.data[r * a.cols + k]!;
      if (av === 0) continue;
      for (let c = 0; c < b.cols; c++) {
        out.data[r * out.cols + c]! += av * b.data[k * b.cols + c]!;
      }
    }
  }
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    const gb = b.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      for (let k = 0; k < a.cols; k++) {
        let acc = 0;
        for (let c = 0; c < b.cols; c++) {
          acc += g[r * out.cols + c]! * b.data[k * b.cols + c]!;
          gb[k * b.cols + c]! += a.data[r * a.cols + k]! * g[r * out.cols + c]!;
        }
        ga[r * a.cols + k]! += acc;
      }
    }
  });
  return out;
}

/** a (n x k) @ b^T (b is m x k) -> n x m; used for attention scores. */
export function matmulT(tape: Tape | null, a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.cols) throw new Error(`matmulT ${a.rows}x${a.cols} vs ${b.rows}x${b.cols}`);
  const out = new Tensor(a.rows, b.rows);
  for (let r = 0; r < a.rows; r++) {
    for (let m = 0; m < b.rows; m++) {
      let acc = 0;
      for (let k = 0; k < a.cols; k++) {
        acc += a.data[r * a.cols + k]! * b.data[m * b.cols + k]!;
      }
      out.data[r * out.cols + m] = acc;
    }
  }
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    const gb = b.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      for (let m = 0; m < b.rows; m++) {
        const gv = g[r * out.cols + m]!;
        if (gv === 0) continue;
        for (let k = 0; k < a.cols; k++) {
          ga[r * a.cols + k]! += gv * b.data[m * b.cols + k]!;
          gb[m * b.cols + k]! += gv * a.data[r * a.cols + k]!;
        }
      }
    }
  });
  return out;
}

export function add(tape: Tape | null, a: Tensor, b: Tensor): Tensor {
  if (a.rows !== b.rows || a.cols !== b.cols) throw new Error("add shape mismatch");
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i]! + b.data[i]!;
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    const gb = b.ensureGrad();
    for (let i = 0; i < g.length; i++) {
      ga[i]! += g[i]!;
      gb[i]! += g[i]!;
    }
  });
  return out;
}

/** Broadcast a 1 x c row over every row of m. */
export function addRow(tape: Tape | null, m: Tensor, row: Tensor): Tensor {
  if (row.rows !== 1 || row.cols !== m.cols) throw new Error("addRow shape mismatch");
  const out = new Tensor(m.rows, m.cols);
  for (let r = 0; r < m.rows; r++) {
    for (let c = 0; c < m.cols; c++) {
      out.data[r * m.cols + c] = m.data[r * m.cols + c]! + row.data[c]!;
    }
  }
  tape?.record(() => {
    const g = out.grad!;
    const gm = m.ensureGrad();
    const grow = row.ensureGrad();
    for (let r = 0; r < m.rows; r++) {
      for (let c = 0; c < m.cols; c++) {
        gm[r * m.cols + c]! += g[r * m.cols + c]!;
        grow[c]! += g[r * m.cols + c]!;
      }
    }
  });
  return out;
}

export function scale(tape: Tape | null, a: Tensor, s: number): Tensor {
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i]! * s;
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < g.length; i++) ga[i]! += g[i]! * s;
  });
  return out;
}

export function tanhT(tape: Tape | null, a: Tensor): Tensor {
  const out = new Tensor(a.rows, a.cols);
  for (let i = 0; i < out.data.length; i++) out.data[i] = Math.tanh(a.data[i]!);
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    for (let i = 0; i < g.length; i++) {
      ga[i]! += g[i]! * (1 - out.data[i]! * out.data[i]!);
    }
  });
  return out;
}

/** Row-wise softmax (used for attention weights). */
export function rowSoftmax(tape: Tape | null, a: Tensor): Tensor {
  const out = new Tensor(a.rows, a.cols);
  for (let r = 0; r < a.rows; r++) {
    let max = -Infinity;
    for (let c = 0; c < a.cols; c++) max = Math.max(max, a.data[r * a.cols + c]!);
    let sum = 0;
    for (let c = 0; c < a.cols; c++) {
      const e = Math.exp(a.data[r * a.cols + c]! - max);
      out.data[r * a.cols + c] = e;
      sum += e;
    }
    for (let c = 0; c < a.cols; c++) out.data[r * a.cols + c]! /= sum;
  }
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      let dot = 0;
      for (let c = 0; c < a.cols; c++) {
        dot += g[r * a.cols + c]! * out.data[r * a.cols + c]!;
      }
      for (let c = 0; c < a.cols; c++) {
        ga[r * a.cols + c]! +=
          out.data[r * a.cols + c]! * (g[r * a.cols + c]! - dot);
      }
    }
  });
  return out;
}

/** Select rows of an embedding table; gradients scatter-add back. */
export function gatherRows(tape: Tape | null, table: Tensor, ids: number[]): Tensor {
  const out = new Tensor(ids.length, table.cols);
  ids.forEach((id, r) => {
    if (id < 0 || id >= table.rows) throw new Error(`row ${id} out of range`);
    for (let c = 0; c < table.cols; c++) {
      out.data[r * table.cols + c] = table.data[id * table.cols + c]!;
    }
  });
  tape?.record(() => {
    const g = out.grad!;
    const gt = table.ensureGrad();
    ids.forEach((id, r) => {
      for (let c = 0; c < table.cols; c++) {
        gt[id * table.cols + c]! += g[r * table.cols + c]!;
      }
    });
  });
  return out;
}

/** Column means -> 1 x c. */
export function meanRows(tape: Tape | null, a: Tensor): Tensor {
  const out = new Tensor(1, a.cols);
  for (let r = 0; r < a.rows; r++) {
    for (let c = 0; c < a.cols; c++) out.data[c]! += a.data[r * a.cols + c]!;
  }
  for (let c = 0; c < a.cols; c++) out.data[c]! /= a.rows;
  tape?.record(() => {
    const g = out.grad!;
    const ga = a.ensureGrad();
    for (let r = 0; r < a.rows; r++) {
      for (let c = 0; c < a.cols; c++) ga[r * a.cols + c]! += g[c]! / a.rows;
    }
  });
  return out;
}

/** Sum of 1x1 tensors -> 1x1 (combines per-item losses into a batch loss). */
export function addAll(tape: Tape | null, terms: Tensor[]): Tensor {
  if (terms.length === 0) throw new Error("addAll needs at least one term");
  let acc = terms[0]!;
  for (let i = 1; i < terms.length; i++) acc = add(tape, acc, terms[i]!);
  return acc;
}

/** Mean token-level cross entropy of logits (T x V) against target ids. */
export function softmaxCrossEntropyMean(
  tape: Tape | null,
  logits: Tensor,
  targets: number[],
): Tensor {
  if (targets.length !== logits.rows) throw new Error("one target per logit row");
  const rows = logits.rows;
  const cols = logits.cols;
  const probs = new Float64Array(rows * cols);
  let total = 0;
  for (let r = 0; r < rows; r++) {
    const target = targets[r]!;
    if (target < 0 || target >= cols) throw new Error(`target ${target} out of range`);
    let max = -Infinity;
    for (let c = 0; c < cols; c++) max = Math.max(max, logits.data[r * cols + c]!);
    let sum = 0;
    for (let c = 0; c < cols; c++) {
      const e = Math.exp(logits.data[r * cols + c]! - max);
      probs[r * cols + c] = e;
      sum += e;
    }
    for (let c = 0; c < cols; c++) probs[r * cols + c]! /= sum;
    total += -Math.log(probs[r * cols + target]! + 1e-12);
  }
  const out = new Tensor(1, 1, Float64Array.of(total / rows));
  tape?.record(() => {
    const g = out.grad![0]!;
    const gl = logits.ensureGrad();
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        const indicator = c === targets[r]! ? 1 : 0;
        gl[r * cols + c]! += (g * (probs[r * cols + c]! - indicator)) / rows;
      }
    }
  });
  return out;
}
