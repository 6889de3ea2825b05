"""Binary file formats for features, candidate sets, and labels.

All three formats share the same conventions: a 4-byte ASCII magic, two
little-endian u32 header fields, and a little-endian payload. Writers
produce exactly the bytes readers expect, so write(read(f)) is
byte-identical for any well-formed file.

PLLF  float matrix      magic "PLLF", u32 n_rows, u32 n_cols,
                        n_rows*n_cols float32 values, row-major.
PLLC  candidate matrix  magic "PLLC", u32 n_rows, u32 n_classes,
                        n_rows rows of ceil(n_classes/8) bytes; bit j of
                        row i (LSB-first within each byte) is membership
                        of class j. Every row must have at least one bit.
PLLY  label vector      magic "PLLY", u32 n_rows, u32 n_classes,
                        n_rows u32 labels, each < n_classes.
"""

import numpy as np

from .errors import FormatError

MAGIC_FEATURES = b"PLLF"
MAGIC_CANDIDATES = b"PLLC"
MAGIC_LABELS = b"PLLY"
MAGIC_MODEL = b"PLLM"

_HEADER = np.dtype("<u4")
_VALUE = np.dtype("<f4")


def pack_candidate_rows(bits):
    """Pack a boolean (n, k) matrix into (n, ceil(k/8)) bytes, LSB-first."""
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 2:
        raise FormatError(f"candidate matrix must be 2-D, got shape {bits.shape}")
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_candidate_rows(packed, n_classes):
    """Inverse of pack_candidate_rows; trailing pad bits are dropped."""
    packed = np.asarray(packed, dtype=np.uint8)
    bits = np.unpackbits(packed, axis=1, bitorder="little")
    return bits[:, :n_classes].astype(bool)


def _read_exact(fh, n, what, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(
            f"{path}: truncated {what}: expected {n} bytes, got {len(buf)}"
        )
    return buf


def _read_header(fh, magic, path):
    got = fh.read(4)
    if len(got) < 4:
        raise FormatError(f"{path}: truncated header: expected 4-byte magic")
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    raw = _read_exact(fh, 8, "header", path)
    a, b = np.frombuffer(raw, dtype=_HEADER)
    return int(a), int(b)


def write_matrix_file(matrix, path):
    """Write a real matrix (features, text embeddings, or confidences) as PLLF."""
    m = np.ascontiguousarray(matrix, dtype=_VALUE)
    if m.ndim != 2:
        raise FormatError(f"matrix must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FormatError("matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(np.asarray(m.shape, dtype=_HEADER).tobytes())
        fh.write(m.tobytes())


def read_matrix_file(path):
    """Read a PLLF file into a float32 (n_rows, n_cols) array."""
    with open(path, "rb") as fh:
        n, d = _read_header(fh, MAGIC_FEATURES, path)
        payload = _read_exact(fh, n * d * 4, f"payload for {n}x{d} matrix", path)
        extra = fh.read(1)
    if extra:
        raise FormatError(f"{path}: trailing bytes after {n}x{d} payload")
    return np.frombuffer(payload, dtype=_VALUE).reshape(n, d).copy()


def write_candidates_file(bits, path):
    """Write a boolean candidate matrix as PLLC (bit-packed rows)."""
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 2:
        raise FormatError(f"candidate matrix must be 2-D, got shape {bits.shape}")
    empty = np.flatnonzero(~bits.any(axis=1))
    if empty.size:
        raise FormatError(
            f"empty candidate set in row {empty[0]} ({empty.size} empty rows total)"
        )
    with open(path, "wb") as fh:
        fh.write(MAGIC_CANDIDATES)
        fh.write(np.asarray(bits.shape, dtype=_HEADER).tobytes())
        fh.write(pack_candidate_rows(bits).tobytes())


def read_candidates_file(path):
    """Read a PLLC file into a boolean (n_rows, n_classes) array."""
    with open(path, "rb") as fh:
        n, k = _read_header(fh, MAGIC_CANDIDATES, path)
        row_bytes = (k + 7) // 8
        payload = _read_exact(fh, n * row_bytes, f"payload for {n}x{k} candidates", path)
        extra = fh.read(1)
    if extra:
        raise FormatError(f"{path}: trailing bytes after candidate payload")
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(n, row_bytes)
    bits = unpack_candidate_rows(packed, k)
    empty = np.flatnonzero(~bits.any(axis=1))
    if empty.size:
        raise FormatError(f"{path}: empty candidate set in row {empty[0]}")
    return bits


def write_labels_file(labels, n_classes, path):
    """Write class indices as PLLY; every label must be < n_classes."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        bad = y[(y < 0) | (y >= n_classes)][0]
        raise FormatError(f"label {bad} out of range for {n_classes} classes")
    with open(path, "wb") as fh:
        fh.write(MAGIC_LABELS)
        fh.write(np.asarray([y.size, n_classes], dtype=_HEADER).tobytes())
        fh.write(y.astype(_HEADER).tobytes())


def read_labels_file(path):
    """Read a PLLY file; returns (labels, n_classes)."""
    with open(path, "rb") as fh:
        n, k = _read_header(fh, MAGIC_LABELS, path)
        payload = _read_exact(fh, n * 4, f"payload for {n} labels", path)
        extra = fh.read(1)
    if extra:
        raise FormatError(f"{path}: trailing bytes after label payload")
    y = np.frombuffer(payload, dtype=_HEADER).astype(np.int64)
    if y.size and y.max() >= k:
        raise FormatError(f"{path}: label {y.max()} out of range for {k} classes")
    return y, k


def read_features_csv(path):
    """Fallback reader for hand-authored fixtures: one row per line, comma-separated."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float32)
