import { describe, expect, it } from 'vitest';

import {
  decodeCandidates,
  decodeLabels,
  decodeMatrix,
  encodeCandidates,
  encodeLabels,
  encodeMatrix,
  FormatError,
} from '../src/pllf.js';

describe('PLLF matrix encoding', () => {
  it('produces the exact golden bytes for a 2x3 matrix', () => {
    const buf = encodeMatrix([
      [1, 2, 3],
      [4, 5, 6],
    ]);
    const golden = Buffer.alloc(12 + 24);
    golden.write('PLLF', 0, 'ascii');
    golden.writeUInt32LE(2, 4);
    golden.writeUInt32LE(3, 8);
    [1, 2, 3, 4, 5, 6].forEach((v, i) => golden.writeFloatLE(v, 12 + i * 4));
    expect(buf.equals(golden)).toBe(true);
  });

  it('round-trips values', () => {
    const rows = [
      [0.5, -1.25, 3e-7],
      [1e6, 0, -42],
    ];
    const { rows: n, cols: d, data } = decodeMatrix(encodeMatrix(rows));
    expect([n, d]).toEqual([2, 3]);
    expect(data[0]).toBeCloseTo(0.5, 7);
    expect(data[5]).toBe(-42);
  });

  it('rejects truncated payloads with byte counts', () => {
    const buf = encodeMatrix([[1, 2]]);
    expect(() => decodeMatrix(buf.subarray(0, buf.length - 3))).toThrow(/expected 20 bytes/);
  });

  it('rejects a bad magic', () => {
    const buf = Buffer.from('XYZQ00000000', 'ascii');
    expect(() => decodeMatrix(buf)).toThrow(FormatError);
  });

  it('rejects non-finite values', () => {
    expect(() => encodeMatrix([[Number.NaN]])).toThrow(/non-finite/);
  });
});

describe('PLLC candidate encoding', () => {
  it('packs bits LSB-first: K=10 {0,3,7,9} -> 0x89 0x02', () => {
    const row = Array.from({ length: 10 }, (_, j) => [0, 3, 7, 9].includes(j));
    const buf = encodeCandidates([row], 10);
    expect(buf.subarray(12).toString('hex')).toBe('8902');
  });

  it('packs the full 8-class set into 0xff', () => {
    const buf = encodeCandidates([Array(8).fill(true)], 8);
    expect(buf.subarray(12).toString('hex')).toBe('ff');
  });

  it('round-trips random patterns', () => {
    const rows = [
      [true, false, true, false, false, true, false, false, false, true, true],
      [false, true, false, false, false, false, false, false, false, false, false],
    ];
    const decoded = decodeCandidates(encodeCandidates(rows, 11));
    expect(decoded.classes).toBe(11);
    expect(decoded.rows).toEqual(rows);
  });

  it('rejects an empty candidate row on encode and decode', () => {
    expect(() => encodeCandidates([Array(5).fill(false)], 5)).toThrow(/empty candidate set/);
    const buf = Buffer.alloc(13);
    buf.write('PLLC', 0, 'ascii');
    buf.writeUInt32LE(1, 4);
    buf.writeUInt32LE(8, 8);
    expect(() => decodeCandidates(buf)).toThrow(/empty candidate set/);
  });
});

describe('PLLY label encoding', () => {
  it('round-trips [0, 9, 5] with 10 classes', () => {
    const { labels, classes } = decodeLabels(encodeLabels([0, 9, 5], 10));
    expect(labels).toEqual([0, 9, 5]);
    expect(classes).toBe(10);
  });

  it('rejects out-of-range labels both ways', () => {
    expect(() => encodeLabels([10], 10)).toThrow(/out of range/);
    const buf = Buffer.alloc(16);
    buf.write('PLLY', 0, 'ascii');
    buf.writeUInt32LE(1, 4);
    buf.writeUInt32LE(10, 8);
    buf.writeUInt32LE(10, 12);
    expect(() => decodeLabels(buf)).toThrow(/out of range/);
  });

  it('rejects an empty file as truncated', () => {
    expect(() => decodeLabels(Buffer.alloc(0))).toThrow(FormatError);
  });
});
