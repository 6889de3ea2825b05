/**
 * The export pipeline: embed a labeled image dataset and its class prompts,
 * then write the four shared dataset files plus a JSON run manifest.
 *
 *   features.pllf  (N, d) image embeddings, L2-normalized rows
 *   text.pllf      (K, d) prompt embeddings, L2-normalized, class-index order
 *   labels.plly    class indices for the retained rows
 *   conf.pllf      softmax(logit_scale * cosine) zero-shot confidences
 *   manifest.json  model id, template, normalization, logit scale, skips
 *   skipped.txt    sidecar with the indices of undecodable images (if any)
 *
 * Undecodable images are skipped with a warning; all retained rows keep the
 * dataset's canonical order.
 */

import { writeFile } from 'node:fs/promises';
import { join } from 'node:path';

import { Dataset, loadDataset } from './dataset.js';
import { Embedder, ImageDecodeError } from './embedder.js';
import { encodeLabels, encodeMatrix } from './pllf.js';
import { buildPrompts, DEFAULT_TEMPLATE, validateTemplate } from './prompts.js';

export interface ExtractJob {
  datasetDir: string;
  outDir: string;
  template?: string;
  classNames?: string[];
  batchSize?: number;
  device?: string;
}

export interface ExtractResult {
  rows: number;
  classes: number;
  dim: number;
  skipped: number[];
  files: string[];
}

export function l2Normalize(rows: Float32Array[]): Float32Array[] {
  return rows.map((row) => {
    let norm = 0;
    for (let i = 0; i < row.length; i++) norm += row[i] * row[i];
    norm = Math.sqrt(norm);
    if (norm === 0) throw new Error('zero-norm embedding row');
    const out = new Float32Array(row.length);
    for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
    return out;
  });
}

/** Row-wise softmax of scaled cosine similarities between unit vectors. */
export function zeroShotConfidence(
  images: Float32Array[],
  texts: Float32Array[],
  logitScale: number,
): Float32Array[] {
  return images.map((img) => {
    const logits = texts.map((txt) => {
      let dot = 0;
      for (let i = 0; i < img.length; i++) dot += img[i] * txt[i];
      return logitScale * dot;
    });
    const top = Math.max(...logits);
    const exps = logits.map((v) => Math.exp(v - top));
    const total = exps.reduce((a, b) => a + b, 0);
    return Float32Array.from(exps.map((v) => v / total));
  });
}

export async function extract(job: ExtractJob, embedder: Embedder): Promise<ExtractResult> {
  const template = job.template ?? DEFAULT_TEMPLATE;
  validateTemplate(template);
  const dataset: Dataset = await loadDataset(job.datasetDir, job.classNames);
  const batchSize = job.batchSize ?? 64;

  const prompts = buildPrompts(template, dataset.classNames);
  const textRows = l2Normalize(await embedder.embedTexts(prompts));

  const imageRows: Float32Array[] = [];
  const keptLabels: number[] = [];
  const skipped: number[] = [];
  for (let start = 0; start < dataset.imagePaths.length; start += batchSize) {
    const batchIdx = [...Array(Math.min(batchSize, dataset.imagePaths.length - start)).keys()]
      .map((o) => start + o);
    let batch: Float32Array[];
    try {
      batch = await embedder.embedImages(batchIdx.map((i) => dataset.imagePaths[i]));
    } catch (err) {
      if (!(err instanceof ImageDecodeError)) throw err;
      // fall back to per-image embedding so only the broken ones are skipped
      batch = [];
      const kept: number[] = [];
      for (const i of batchIdx) {
        try {
          batch.push((await embedder.embedImages([dataset.imagePaths[i]]))[0]);
          kept.push(i);
        } catch (inner) {
          if (!(inner instanceof ImageDecodeError)) throw inner;
          console.warn(`warning: skipping undecodable image #${i}: ${dataset.imagePaths[i]}`);
          skipped.push(i);
        }
      }
      for (const i of kept) keptLabels.push(dataset.labels[i]);
      imageRows.push(...l2Normalize(batch));
      continue;
    }
    for (const i of batchIdx) keptLabels.push(dataset.labels[i]);
    imageRows.push(...l2Normalize(batch));
  }
  if (imageRows.length === 0) {
    throw new Error('no decodable images in the dataset');
  }

  const conf = zeroShotConfidence(imageRows, textRows, embedder.logitScale);
  const K = dataset.classNames.length;

  const files: string[] = [];
  const put = async (name: string, bytes: Buffer) => {
    const path = join(job.outDir, name);
    await writeFile(path, bytes);
    files.push(path);
  };
  await put('features.pllf', encodeMatrix(imageRows));
  await put('text.pllf', encodeMatrix(textRows));
  await put('labels.plly', encodeLabels(keptLabels, K));
  await put('conf.pllf', encodeMatrix(conf));
  if (skipped.length > 0) {
    await put('skipped.txt', Buffer.from(skipped.join('\n') + '\n', 'utf-8'));
  }
  const manifest = {
    model: embedder.id,
    template,
    class_transform: 'lowercase, underscores to spaces',
    normalization: 'l2',
    logit_scale: embedder.logitScale,
    rows: imageRows.length,
    classes: K,
    dim: imageRows[0].length,
    skipped: skipped.length,
  };
  await put('manifest.json', Buffer.from(JSON.stringify(manifest, null, 2) + '\n', 'utf-8'));

  return {
    rows: imageRows.length,
    classes: K,
    dim: imageRows[0].length,
    skipped,
    files,
  };
}
