/**
 * embed-extract CLI.
 *
 *   embed-extract --dataset <dir> --model <id> --out <dir>
 *                 [--template "a photo of a [CLASS]"] [--classes <file>]
 *                 [--batch-size 64] [--dim 64] [--device cpu]
 *
 * --model accepts a transformers.js checkpoint id (e.g.
 * Xenova/clip-vit-base-patch16) or the offline backends "mock" /
 * "aligned-mock". Exit codes: 0 success, 2 usage/config errors.
 */

import { mkdir, readFile } from 'node:fs/promises';

import { DatasetError } from './dataset.js';
import { resolveEmbedder } from './embedder.js';
import { extract } from './extract.js';
import { TemplateError } from './prompts.js';

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith('--') || value === undefined) {
      throw new DatasetError(`bad argument: ${key}`);
    }
    out.set(key.slice(2), value);
  }
  return out;
}

export async function main(argv: string[]): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  const datasetDir = args.get('dataset');
  const outDir = args.get('out');
  const model = args.get('model') ?? 'mock';
  if (!datasetDir || !outDir) {
    console.error('usage: embed-extract --dataset <dir> --model <id> --out <dir> [--template <t>]');
    return 2;
  }
  try {
    let classNames: string[] | undefined;
    const classFile = args.get('classes');
    if (classFile) {
      classNames = (await readFile(classFile, 'utf-8'))
        .split('\n')
        .map((s) => s.trim())
        .filter(Boolean);
    }
    await mkdir(outDir, { recursive: true });
    const embedder = await resolveEmbedder(model, Number(args.get('dim') ?? 64), args.get('device'));
    const result = await extract(
      {
        datasetDir,
        outDir,
        template: args.get('template'),
        classNames,
        batchSize: args.has('batch-size') ? Number(args.get('batch-size')) : undefined,
        device: args.get('device'),
      },
      embedder,
    );
    console.log(
      `wrote ${result.rows} rows x ${result.dim} dims for ${result.classes} classes ` +
        `(${result.skipped.length} skipped) to ${outDir}`,
    );
    return 0;
  } catch (err) {
    if (err instanceof DatasetError || err instanceof TemplateError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const entry = process.argv[1] ?? '';
if (entry.endsWith('cli.js') || entry.endsWith('embed-extract')) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
