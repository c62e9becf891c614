/** Miniature story-conditioned captioner.
 *
 * Wiring: an image encoder turns patch statistics into a sequence of image
 * embeddings; a text encoder embeds the (possibly noisy) story and grounds it
 * in the image via cross-attention (story tokens query the image sequence);
 * the pooled composite representation then conditions an autoregressive
 * decoder that emits the detailed caption token by token. Trained end to end
 * with next-token language-modeling loss on the caption.
 */

import {
  Tape,
  Tensor,
  add,
  addRow,
  gatherRows,
  matmul,
  matmulT,
  meanRows,
  rowSoftmax,
  scale,
  softmaxCrossEntropyMean,
  tanhT,
} from "./tensor";
import { Rng } from "./rng";
import { PATCH_FEATURES } from "./image";
import { BOS, EOS, PAD, UNK, Tokenizer } from "./tokenizer";

export interface ModelDims {
  resolution: number;
  grid: number;
  dModel: number;
  maxStory: number;
  maxCaption: number;
}

export class CaptionModel {
  readonly dims: ModelDims;
  readonly tokenizer: Tokenizer;
  readonly params: Map<string, Tensor>;

  constructor(dims: ModelDims, tokenizer: Tokenizer, params: Map<string, Tensor>) {
    this.dims = dims;
    this.tokenizer = tokenizer;
    this.params = params;
  }

  static init(dims: ModelDims, tokenizer: Tokenizer, rng: Rng): CaptionModel {
    const d = dims.dModel;
    const vocab = tokenizer.size;
    // Variance-preserving init (std 1/sqrt(d)): keeps layer gain near 1 so
    // the story signal survives the encoder->composite->decoder path even in
    // a freshly initialized or lightly trained model.
    const g = (rows: number, cols: number) => Tensor.gaussian(rows, cols, rng, 1 / Math.sqrt(d));
    const params = new Map<string, Tensor>([
      ["embed_story", g(vocab, d)],
      ["embed_caption", g(vocab, d)],
      ["pos_story", g(dims.maxStory, d)],
      ["pos_caption", g(dims.maxCaption, d)],
      ["img_proj", g(PATCH_FEATURES, d)],
      ["img_bias", Tensor.zeros(1, d)],
      ["attn_q", g(d, d)],
      ["attn_k", g(d, d)],
      ["attn_v", g(d, d)],
      ["enc_ff", g(d, d)],
      ["enc_ff_bias", Tensor.zeros(1, d)],
      ["dec_prev", g(d, d)],
      ["dec_pos", g(d, d)],
      ["dec_ctx", g(d, d)],
      ["dec_bias", Tensor.zeros(1, d)],
      ["out_proj", g(d, vocab)],
      ["out_bias", Tensor.zeros(1, vocab)],
    ]);
    return new CaptionModel(dims, tokenizer, params);
  }

  private p(name: string): Tensor {
    const t = this.params.get(name);
    if (!t) throw new Error(`missing parameter ${name}`);
    return t;
  }

  /** Story grounded in the image -> one pooled composite vector (1 x d). */
  composite(tape: Tape | null, patchFeats: Tensor, storyIds: number[]): Tensor {
    const imgSeq = addRow(tape, matmul(tape, patchFeats, this.p("img_proj")), this.p("img_bias"));
    const positions = storyIds.map((_, i) => Math.min(i, this.dims.maxStory - 1));
    const storyEmb = add(
      tape,
      gatherRows(tape, this.p("embed_story"), storyIds),
      gatherRows(tape, this.p("pos_story"), positions),
    );
    const q = matmul(tape, storyEmb, this.p("attn_q"));
    const k = matmul(tape, imgSeq, this.p("attn_k"));
    const v = matmul(tape, imgSeq, this.p("attn_v"));
    const weights = rowSoftmax(tape, scale(tape, matmulT(tape, q, k), 1 / Math.sqrt(this.dims.dModel)));
    const grounded = add(tape, storyEmb, matmul(tape, weights, v));
    const hidden = tanhT(tape, addRow(tape, matmul(tape, grounded, this.p("enc_ff")), this.p("enc_ff_bias")));
    return meanRows(tape, hidden);
  }

  /** Decoder hidden states for caption positions 0..T-1 (teacher forcing). */
  private decoderLogits(tape: Tape | null, composite: Tensor, prevIds: number[]): Tensor {
    const positions = prevIds.map((_, i) => Math.min(i, this.dims.maxCaption - 1));
    const prevEmb = gatherRows(tape, this.p("embed_caption"), prevIds);
    const posEmb = gatherRows(tape, this.p("pos_caption"), positions);
    const ctxRow = matmul(tape, composite, this.p("dec_ctx")); // 1 x d
    const pre = addRow(
      tape,
      add(tape, matmul(tape, prevEmb, this.p("dec_prev")), matmul(tape, posEmb, this.p("dec_pos"))),
      ctxRow,
    );
    const hidden = tanhT(tape, addRow(tape, pre, this.p("dec_bias")));
    return addRow(tape, matmul(tape, hidden, this.p("out_proj")), this.p("out_bias"));
  }

  /** Mean next-token LM loss of the caption given (image, story). */
  lossOn(tape: Tape | null, patchFeats: Tensor, storyIds: number[], captionIds: number[]): Tensor {
    if (captionIds.length < 2) throw new Error("caption must hold at least BOS, EOS");
    const comp = this.composite(tape, patchFeats, storyIds);
    const prev = captionIds.slice(0, -1);
    const targets = captionIds.slice(1);
    const logits = this.decoderLogits(tape, comp, prev);
    return softmaxCrossEntropyMean(tape, logits, targets);
  }

  /** Greedy decode; deterministic, never emits an empty caption. */
  greedyCaption(patchFeats: Tensor, storyIds: number[]): string {
    const comp = this.composite(null, patchFeats, storyIds);
    const out: number[] = [];
    let prev = BOS;
    for (let pos = 0; pos < this.dims.maxCaption; pos++) {
      const logits = this.positionalLogits(comp, prev, pos);
      let best = -1;
      let bestScore = -Infinity;
      for (let v = 0; v < this.tokenizer.size; v++) {
        if (v === PAD || v === BOS || v === UNK) continue; // never valid output
        if (v === EOS && out.length === 0) continue; // captions are non-empty
        const score = logits.data[v]!;
        if (score > bestScore) {
          bestScore = score;
          best = v;
        }
      }
      if (best === EOS || best === -1) break;
      out.push(best);
      prev = best;
    }
    return this.tokenizer.decode([...out, EOS]);
  }

  private positionalLogits(composite: Tensor, prev: number, pos: number): Tensor {
    const clamped = Math.min(pos, this.dims.maxCaption - 1);
    const prevEmb = gatherRows(null, this.p("embed_caption"), [prev]);
    const posEmb = gatherRows(null, this.p("pos_caption"), [clamped]);
    const ctxRow = matmul(null, composite, this.p("dec_ctx"));
    const pre = addRow(
      null,
      add(null, matmul(null, prevEmb, this.p("dec_prev")), matmul(null, posEmb, this.p("dec_pos"))),
      ctxRow,
    );
    const hidden = tanhT(null, addRow(null, pre, this.p("dec_bias")));
    return addRow(null, matmul(null, hidden, this.p("out_proj")), this.p("out_bias"));
  }
}
