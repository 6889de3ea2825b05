/**
 * Embedding backends.
 *
 * An Embedder turns image files and text prompts into fixed-width vectors
 * and reports the checkpoint's trained logit scale (the multiplier applied
 * to cosine similarities before the zero-shot softmax).
 *
 * The transformers.js backend performs real CLIP-family inference when the
 * optional dependency is installed; the deterministic mock backend exists so
 * the extraction pipeline and file contracts can run and be tested offline.
 */

import { createHash } from 'node:crypto';
import { readFile } from 'node:fs/promises';

export interface Embedder {
  readonly id: string;
  readonly dim: number;
  readonly logitScale: number;
  embedImages(paths: string[]): Promise<Float32Array[]>;
  embedTexts(prompts: string[]): Promise<Float32Array[]>;
}

export class ImageDecodeError extends Error {}

function hashToUnitVector(seedBytes: Buffer, dim: number): Float32Array {
  // xorshift stream seeded by sha256 of the content: stable across runs
  const digest = createHash('sha256').update(seedBytes).digest();
  let s0 = digest.readUInt32LE(0) || 1;
  let s1 = digest.readUInt32LE(4) || 2;
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    s1 ^= s1 << 13;
    s1 ^= s1 >>> 17;
    s1 ^= s1 << 5;
    s1 >>>= 0;
    const mixed = (s1 + (s0 = (s0 * 1664525 + 1013904223) >>> 0)) >>> 0;
    out[i] = mixed / 2 ** 32 - 0.5;
  }
  let norm = 0;
  for (let i = 0; i < dim; i++) norm += out[i] * out[i];
  norm = Math.sqrt(norm) || 1;
  for (let i = 0; i < dim; i++) out[i] /= norm;
  return out;
}

/**
 * Deterministic offline backend: vectors derive from content hashes, so
 * identical inputs always embed identically. Zero-length or missing files
 * raise ImageDecodeError, standing in for undecodable images.
 */
export class MockEmbedder implements Embedder {
  readonly id: string = 'mock';
  readonly logitScale = 100.0;

  constructor(readonly dim: number = 64) {}

  async embedImages(paths: string[]): Promise<Float32Array[]> {
    const out: Float32Array[] = [];
    for (const path of paths) {
      let bytes: Buffer;
      try {
        bytes = await readFile(path);
      } catch {
        throw new ImageDecodeError(`cannot read image: ${path}`);
      }
      if (bytes.length === 0) {
        throw new ImageDecodeError(`cannot decode image: ${path}`);
      }
      out.push(hashToUnitVector(bytes, this.dim));
    }
    return out;
  }

  async embedTexts(prompts: string[]): Promise<Float32Array[]> {
    return prompts.map((p) => hashToUnitVector(Buffer.from(`text:${p}`, 'utf-8'), this.dim));
  }
}

/**
 * A mock whose text and image embeddings agree by construction: the image
 * "file" contents name a class, and the image vector sits near that class's
 * prompt embedding. Used in tests to get meaningful zero-shot confidences.
 */
export class AlignedMockEmbedder extends MockEmbedder {
  override readonly id: string = 'aligned-mock';

  constructor(dim = 64, readonly template: string = 'a photo of a [CLASS]') {
    super(dim);
  }

  private promptFor(cls: string): string {
    const normalized = cls.replaceAll('_', ' ').toLowerCase().trim();
    return this.template.replace('[CLASS]', normalized);
  }

  override async embedImages(paths: string[]): Promise<Float32Array[]> {
    const out: Float32Array[] = [];
    for (const path of paths) {
      let bytes: Buffer;
      try {
        bytes = await readFile(path);
      } catch {
        throw new ImageDecodeError(`cannot read image: ${path}`);
      }
      if (bytes.length === 0) {
        throw new ImageDecodeError(`cannot decode image: ${path}`);
      }
      // file content "<class name>|<noise id>": anchor on that class's prompt
      const [cls, noise] = bytes.toString('utf-8').split('|');
      const anchor = hashToUnitVector(
        Buffer.from(`text:${this.promptFor(cls)}`, 'utf-8'), this.dim,
      );
      const jitter = hashToUnitVector(Buffer.from(`img:${noise ?? ''}`, 'utf-8'), this.dim);
      const v = new Float32Array(this.dim);
      let norm = 0;
      for (let i = 0; i < this.dim; i++) {
        v[i] = anchor[i] + 0.25 * jitter[i];
        norm += v[i] * v[i];
      }
      norm = Math.sqrt(norm) || 1;
      for (let i = 0; i < this.dim; i++) v[i] /= norm;
      out.push(v);
    }
    return out;
  }
}

/** Real inference through transformers.js (optional dependency). */
export async function loadTransformersEmbedder(modelId: string, device?: string): Promise<Embedder> {
  let t: any;
  try {
    // optional dependency, resolved at runtime only
    const moduleId = '@huggingface/transformers';
    t = await import(moduleId);
  } catch {
    throw new Error(
      'transformers.js is not installed; run `npm install @huggingface/transformers` ' +
        'or use --model mock / --model aligned-mock',
    );
  }
  const opts = device ? { device } : {};
  const tokenizer = await t.AutoTokenizer.from_pretrained(modelId);
  const processor = await t.AutoProcessor.from_pretrained(modelId);
  const textModel = await t.CLIPTextModelWithProjection.from_pretrained(modelId, opts);
  const visionModel = await t.CLIPVisionModelWithProjection.from_pretrained(modelId, opts);
  const scale = await readLogitScale(t, modelId);

  const toRows = (tensor: any): Float32Array[] => {
    const [n, d] = tensor.dims;
    const data = tensor.data as Float32Array;
    const rows: Float32Array[] = [];
    for (let i = 0; i < n; i++) rows.push(data.slice(i * d, (i + 1) * d));
    return rows;
  };

  let dim = 0;
  const embedder: Embedder = {
    id: modelId,
    get dim() {
      return dim;
    },
    logitScale: scale,
    async embedTexts(prompts: string[]) {
      const input = tokenizer(prompts, { padding: true, truncation: true });
      const { text_embeds } = await textModel(input);
      const rows = toRows(text_embeds);
      dim = rows[0]?.length ?? dim;
      return rows;
    },
    async embedImages(paths: string[]) {
      const images = [];
      for (const path of paths) {
        try {
          images.push(await t.RawImage.read(path));
        } catch (err) {
          throw new ImageDecodeError(`cannot decode image: ${path}`);
        }
      }
      const inputs = await processor(images);
      const { image_embeds } = await visionModel(inputs);
      const rows = toRows(image_embeds);
      dim = rows[0]?.length ?? dim;
      return rows;
    },
  };
  return embedder;
}

async function readLogitScale(t: any, modelId: string): Promise<number> {
  // the checkpoint stores log(scale); zero-shot logits use exp(log_scale)
  try {
    const config = await t.AutoConfig.from_pretrained(modelId);
    const logit = config?.logit_scale_init_value;
    if (typeof logit === 'number') return Math.exp(logit);
  } catch {
    // fall through to the CLIP-family convention
  }
  return 100.0;
}

export async function resolveEmbedder(modelId: string, dim: number, device?: string): Promise<Embedder> {
  if (modelId === 'mock') return new MockEmbedder(dim);
  if (modelId === 'aligned-mock') return new AlignedMockEmbedder(dim);
  return loadTransformersEmbedder(modelId, device);
}
