/**
 * Dataset directory layout:
 *   <dir>/classes.txt   one class name per line, class-index order
 *   <dir>/labels.txt    one class index per line, canonical sample order
 *   <dir>/images.txt    one image path per line (relative to <dir>), same order
 *
 * The canonical sample order of the export is the line order of labels.txt.
 */

import { readFile } from 'node:fs/promises';
import { join } from 'node:path';

export class DatasetError extends Error {}

export interface Dataset {
  classNames: string[];
  labels: number[];
  imagePaths: string[];
}

async function readLines(path: string): Promise<string[]> {
  let text: string;
  try {
    text = await readFile(path, 'utf-8');
  } catch {
    throw new DatasetError(`missing dataset file: ${path}`);
  }
  return text
    .split('\n')
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

export async function loadDataset(dir: string, classNames?: string[]): Promise<Dataset> {
  const classes = classNames ?? (await readLines(join(dir, 'classes.txt')));
  if (classes.length === 0) {
    throw new DatasetError('class list is empty');
  }
  const labelLines = await readLines(join(dir, 'labels.txt'));
  const labels = labelLines.map((line, i) => {
    const y = Number(line);
    if (!Number.isInteger(y) || y < 0) {
      throw new DatasetError(`labels.txt line ${i + 1}: bad label "${line}"`);
    }
    return y;
  });
  const maxLabel = Math.max(...labels);
  if (maxLabel >= classes.length) {
    throw new DatasetError(
      `class-count mismatch: labels reach ${maxLabel} but only ${classes.length} class names given`,
    );
  }
  const imagePaths = (await readLines(join(dir, 'images.txt'))).map((p) => join(dir, p));
  if (imagePaths.length !== labels.length) {
    throw new DatasetError(
      `images.txt has ${imagePaths.length} entries but labels.txt has ${labels.length}`,
    );
  }
  return { classNames: classes, labels, imagePaths };
}
