/**
 * Binary writers/readers for the shared dataset formats.
 *
 * All integers are little-endian u32, all floats little-endian f32:
 *   PLLF  "PLLF" | u32 rows | u32 cols | rows*cols f32, row-major
 *   PLLC  "PLLC" | u32 rows | u32 classes | per row ceil(K/8) bytes,
 *         bit j of row i = class-j membership, LSB-first within each byte
 *   PLLY  "PLLY" | u32 rows | u32 classes | rows u32 labels, each < classes
 */

export class FormatError extends Error {}

const MAGIC_F = Buffer.from('PLLF', 'ascii');
const MAGIC_C = Buffer.from('PLLC', 'ascii');
const MAGIC_Y = Buffer.from('PLLY', 'ascii');

function header(magic: Buffer, a: number, b: number): Buffer {
  const buf = Buffer.alloc(12);
  magic.copy(buf, 0);
  buf.writeUInt32LE(a >>> 0, 4);
  buf.writeUInt32LE(b >>> 0, 8);
  return buf;
}

export function encodeMatrix(rows: number[][] | Float32Array[], cols?: number): Buffer {
  const n = rows.length;
  const d = cols ?? (n > 0 ? rows[0].length : 0);
  const payload = Buffer.alloc(n * d * 4);
  for (let i = 0; i < n; i++) {
    const row = rows[i];
    if (row.length !== d) {
      throw new FormatError(`row ${i} has ${row.length} values, expected ${d}`);
    }
    for (let j = 0; j < d; j++) {
      const v = row[j];
      if (!Number.isFinite(v)) {
        throw new FormatError(`non-finite value at (${i}, ${j})`);
      }
      payload.writeFloatLE(Math.fround(v), (i * d + j) * 4);
    }
  }
  return Buffer.concat([header(MAGIC_F, n, d), payload]);
}

export function decodeMatrix(buf: Buffer): { rows: number; cols: number; data: Float32Array } {
  if (buf.length < 12 || !buf.subarray(0, 4).equals(MAGIC_F)) {
    throw new FormatError(`bad magic, expected PLLF`);
  }
  const rows = buf.readUInt32LE(4);
  const cols = buf.readUInt32LE(8);
  const expected = 12 + rows * cols * 4;
  if (buf.length !== expected) {
    throw new FormatError(`expected ${expected} bytes, got ${buf.length}`);
  }
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(12 + i * 4);
  }
  return { rows, cols, data };
}

export function encodeCandidates(rows: boolean[][], classes: number): Buffer {
  const n = rows.length;
  const rowBytes = Math.ceil(classes / 8);
  const payload = Buffer.alloc(n * rowBytes);
  for (let i = 0; i < n; i++) {
    if (rows[i].length !== classes) {
      throw new FormatError(`row ${i} has ${rows[i].length} flags, expected ${classes}`);
    }
    let any = false;
    for (let j = 0; j < classes; j++) {
      if (rows[i][j]) {
        any = true;
        payload[i * rowBytes + (j >> 3)] |= 1 << (j & 7);
      }
    }
    if (!any) {
      throw new FormatError(`empty candidate set in row ${i}`);
    }
  }
  return Buffer.concat([header(MAGIC_C, n, classes), payload]);
}

export function decodeCandidates(buf: Buffer): { rows: boolean[][]; classes: number } {
  if (buf.length < 12 || !buf.subarray(0, 4).equals(MAGIC_C)) {
    throw new FormatError(`bad magic, expected PLLC`);
  }
  const n = buf.readUInt32LE(4);
  const classes = buf.readUInt32LE(8);
  const rowBytes = Math.ceil(classes / 8);
  if (buf.length !== 12 + n * rowBytes) {
    throw new FormatError(`expected ${12 + n * rowBytes} bytes, got ${buf.length}`);
  }
  const rows: boolean[][] = [];
  for (let i = 0; i < n; i++) {
    const row: boolean[] = [];
    for (let j = 0; j < classes; j++) {
      row.push((buf[12 + i * rowBytes + (j >> 3)] & (1 << (j & 7))) !== 0);
    }
    if (!row.some(Boolean)) {
      throw new FormatError(`empty candidate set in row ${i}`);
    }
    rows.push(row);
  }
  return { rows, classes };
}

export function encodeLabels(labels: number[], classes: number): Buffer {
  const payload = Buffer.alloc(labels.length * 4);
  labels.forEach((y, i) => {
    if (!Number.isInteger(y) || y < 0 || y >= classes) {
      throw new FormatError(`label ${y} out of range for ${classes} classes`);
    }
    payload.writeUInt32LE(y, i * 4);
  });
  return Buffer.concat([header(MAGIC_Y, labels.length, classes), payload]);
}

export function decodeLabels(buf: Buffer): { labels: number[]; classes: number } {
  if (buf.length < 12 || !buf.subarray(0, 4).equals(MAGIC_Y)) {
    throw new FormatError(`bad magic, expected PLLY`);
  }
  const n = buf.readUInt32LE(4);
  const classes = buf.readUInt32LE(8);
  if (buf.length !== 12 + n * 4) {
    throw new FormatError(`expected ${12 + n * 4} bytes, got ${buf.length}`);
  }
  const labels: number[] = [];
  for (let i = 0; i < n; i++) {
    const y = buf.readUInt32LE(12 + i * 4);
    if (y >= classes) {
      throw new FormatError(`label ${y} out of range for ${classes} classes`);
    }
    labels.push(y);
  }
  return { labels, classes };
}
