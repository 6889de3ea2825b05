"""Evaluation metrics and the flat key=value report format."""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError
from .validation import check_candidates

SHOT_THRESHOLDS = (100, 20)


def accuracy(preds, labels):
    """Fraction of exact matches."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.size != labels.size:
        raise ShapeError(f"{preds.size} predictions vs {labels.size} labels")
    if preds.size == 0:
        raise ShapeError("cannot score zero predictions")
    return float((preds == labels).mean())


def per_class_accuracy(preds, labels, n_classes):
    """Per-class accuracy; classes absent from labels get nan."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        mask = labels == c
        if mask.any():
            out[c] = float((preds[mask] == c).mean())
    return out


def shot_accuracy(preds, labels, train_class_counts, thresholds=SHOT_THRESHOLDS):
    """Mean per-class accuracy inside the many/medium/few frequency buckets.

    Buckets come from the training class counts: many > thresholds[0],
    thresholds[1] <= medium <= thresholds[0], few < thresholds[1]. A bucket
    with no scoreable classes is reported as None, not zero.
    """
    counts = np.asarray(train_class_counts, dtype=np.int64).ravel()
    hi, lo = thresholds
    acc = per_class_accuracy(preds, labels, counts.size)

    def bucket(mask):
        vals = acc[mask & ~np.isnan(acc)]
        return float(vals.mean()) if vals.size else None

    return (
        bucket(counts > hi),
        bucket((counts >= lo) & (counts <= hi)),
        bucket(counts < lo),
    )


def covering_oracle(preds, candidates, oracle_labels=None):
    """Covering rate (prediction inside the candidate set) and, when oracle
    labels are known, accuracy against them."""
    preds = np.asarray(preds, dtype=np.int64).ravel()
    S = check_candidates(candidates, n_samples=preds.size)
    cr = float(S[np.arange(preds.size), preds].mean())
    oa = None if oracle_labels is None else accuracy(preds, oracle_labels)
    return cr, oa


@dataclass(frozen=True)
class MetricBlock:
    """Final metric summary; entries are None when their inputs are missing."""

    overall_acc: Optional[float] = None
    many_acc: Optional[float] = None
    medium_acc: Optional[float] = None
    few_acc: Optional[float] = None
    covering_rate: Optional[float] = None
    oracle_acc: Optional[float] = None


def evaluate_block(preds, oracle_labels=None, candidates=None, train_class_counts=None):
    """Assemble a MetricBlock from whatever ground truth is available."""
    overall = many = medium = few = cr = oa = None
    if oracle_labels is not None:
        overall = accuracy(preds, oracle_labels)
        if train_class_counts is not None:
            many, medium, few = shot_accuracy(preds, oracle_labels, train_class_counts)
    if candidates is not None:
        cr, oa = covering_oracle(preds, candidates, oracle_labels)
    return MetricBlock(
        overall_acc=overall,
        many_acc=many,
        medium_acc=medium,
        few_acc=few,
        covering_rate=cr,
        oracle_acc=oa,
    )


_REPORT_FIELDS = (
    "overall_acc",
    "many_acc",
    "medium_acc",
    "few_acc",
    "covering_rate",
    "oracle_acc",
)


def format_report(block, extra=None):
    """Render a MetricBlock (plus extra key=value pairs) as diff-friendly text."""
    lines = []
    for key in _REPORT_FIELDS:
        value = getattr(block, key)
        lines.append(f"{key}={'unavailable' if value is None else f'{value:.6f}'}")
    for key in sorted(extra or {}):
        lines.append(f"{key}={extra[key]}")
    return "\n".join(lines) + "\n"


def write_report(path, block, extra=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(block, extra))


def read_report(path):
    """Parse a report back into a dict (floats where possible)."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            if value == "unavailable":
                out[key] = None
            else:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


def write_per_class_csv(path, preds, labels, n_classes):
    """Optional per-class accuracy CSV companion to the report."""
    acc = per_class_accuracy(preds, labels, n_classes)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "accuracy"])
        for c, a in enumerate(acc):
            writer.writerow([c, "" if np.isnan(a) else f"{a:.6f}"])
