/** Word-level vocabulary frozen at training time and stored in checkpoints. */

export const PAD = 0;
export const BOS = 1;
export const EOS = 2;
export const UNK = 3;
export const SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"];

export function splitWords(text: string): string[] {
  return text
    .toLowerCase()
    .split(/\s+/)
    .map((w) => w.replace(/^[^a-z0-9]+|[^a-z0-9]+$/g, ""))
    .filter((w) => w.length > 0);
}

export class Tokenizer {
  readonly words: string[];
  private readonly index: Map<string, number>;

  constructor(words: string[]) {
    if (words.slice(0, SPECIALS.length).join(",") !== SPECIALS.join(",")) {
      throw new Error("vocabulary must start with the special tokens");
    }
    this.words = words;
    this.index = new Map(words.map((w, i) => [w, i]));
  }

  /** Frequency-then-alphabetical order keeps builds deterministic. */
  static build(texts: string[], maxSize = 512): Tokenizer {
    const counts = new Map<string, number>();
    for (const text of texts) {
      for (const word of splitWords(text)) {
        counts.set(word, (counts.get(word) ?? 0) + 1);
      }
    }
    const ranked = [...counts.entries()]
      .sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : 1))
      .slice(0, Math.max(0, maxSize - SPECIALS.length))
      .map(([word]) => word);
    return new Tokenizer([...SPECIALS, ...ranked]);
  }

  get size(): number {
    return this.words.length;
  }

  encode(text: string, maxLen: number): number[] {
    const ids = splitWords(text)
      .slice(0, maxLen - 2)
      .map((w) => this.index.get(w) ?? UNK);
    return [BOS, ...ids, EOS];
  }

  decode(ids: number[]): string {
    const out: string[] = [];
    for (const id of ids) {
      if (id === EOS) break;
      if (id === PAD || id === BOS) continue;
      out.push(this.words[id] ?? "<unk>");
    }
    return out.join(" ");
  }
}
