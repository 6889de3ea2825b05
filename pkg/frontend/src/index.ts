export {
  decodeCandidates,
  decodeLabels,
  decodeMatrix,
  encodeCandidates,
  encodeLabels,
  encodeMatrix,
  FormatError,
} from './pllf.js';
export { buildPrompts, DEFAULT_TEMPLATE, normalizeClassName, validateTemplate } from './prompts.js';
export {
  AlignedMockEmbedder,
  ImageDecodeError,
  MockEmbedder,
  loadTransformersEmbedder,
  resolveEmbedder,
} from './embedder.js';
export type { Embedder } from './embedder.js';
export { DatasetError, loadDataset } from './dataset.js';
export type { Dataset } from './dataset.js';
export { extract, l2Normalize, zeroShotConfidence } from './extract.js';
export type { ExtractJob, ExtractResult } from './extract.js';
export { main } from './cli.js';
