"""Core dataset containers and the diagnostic validator."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LabelSpace:
    """A set of n_classes categories, optionally named for prompts and reports."""

    n_classes: int
    class_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        if int(self.n_classes) < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        object.__setattr__(self, "n_classes", int(self.n_classes))
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.n_classes:
                raise ConfigError(
                    f"{len(names)} class names for {self.n_classes} classes"
                )
            if any(not n for n in names):
                raise ConfigError("class names must be non-empty")
            if len(set(names)) != len(names):
                raise ConfigError("class names must be distinct")
            object.__setattr__(self, "class_names", names)


@dataclass
class PLLDataset:
    """Frozen feature vectors with per-sample candidate label sets.

    Content invariants (non-empty candidate rows, matching row counts, label
    coverage) are deliberately not enforced at construction; validate_dataset
    reports violations instead of raising, so malformed data can be inspected.
    """

    features: np.ndarray
    candidates: np.ndarray
    space: LabelSpace
    oracle_labels: Optional[np.ndarray] = None
    class_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.candidates = np.asarray(self.candidates).astype(bool)
        if self.oracle_labels is not None:
            self.oracle_labels = np.asarray(self.oracle_labels, dtype=np.int64).ravel()
            if self.class_counts is None:
                valid = (self.oracle_labels >= 0) & (
                    self.oracle_labels < self.space.n_classes
                )
                self.class_counts = np.bincount(
                    self.oracle_labels[valid], minlength=self.space.n_classes
                )
        if self.class_counts is not None:
            self.class_counts = np.asarray(self.class_counts, dtype=np.int64)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return self.space.n_classes

    def covered(self):
        """Per-sample flag: oracle label is inside the candidate row."""
        if self.oracle_labels is None:
            return None
        n = min(self.candidates.shape[0], self.oracle_labels.size)
        y = self.oracle_labels[:n]
        ok = (y >= 0) & (y < self.candidates.shape[1])
        out = np.zeros(n, dtype=bool)
        rows = np.flatnonzero(ok)
        out[rows] = self.candidates[rows, y[rows]]
        return out

    def subset(self, indices):
        """Row subset preserving oracle labels; class counts are recomputed."""
        indices = np.asarray(indices, dtype=np.int64)
        return PLLDataset(
            features=self.features[indices],
            candidates=self.candidates[indices],
            space=self.space,
            oracle_labels=None if self.oracle_labels is None else self.oracle_labels[indices],
        )


@dataclass
class ValidationReport:
    """Violation counts from validate_dataset; all zeros means well-formed."""

    n_samples: int
    n_classes: int
    shape_mismatches: list = field(default_factory=list)
    nonfinite_feature_rows: int = 0
    empty_candidate_rows: int = 0
    oracle_out_of_range: int = 0
    class_count_mismatches: int = 0
    covered_fraction: Optional[float] = None

    @property
    def is_well_formed(self):
        return (
            not self.shape_mismatches
            and self.nonfinite_feature_rows == 0
            and self.empty_candidate_rows == 0
            and self.oracle_out_of_range == 0
            and self.class_count_mismatches == 0
        )


def validate_dataset(ds):
    """Count invariant violations without ever raising on content.

    Reports row-count and class-count mismatches, non-finite feature rows,
    empty candidate rows, out-of-range oracle labels, class-count drift, and
    the fraction of samples whose oracle label is covered by the candidates.
    """
    report = ValidationReport(n_samples=ds.features.shape[0], n_classes=ds.space.n_classes)

    if ds.features.ndim != 2:
        report.shape_mismatches.append(f"features ndim {ds.features.ndim} != 2")
    if ds.candidates.ndim != 2:
        report.shape_mismatches.append(f"candidates ndim {ds.candidates.ndim} != 2")
    else:
        if ds.candidates.shape[0] != ds.features.shape[0]:
            report.shape_mismatches.append(
                f"candidates rows {ds.candidates.shape[0]} != features rows {ds.features.shape[0]}"
            )
        if ds.candidates.shape[1] != ds.space.n_classes:
            report.shape_mismatches.append(
                f"candidates classes {ds.candidates.shape[1]} != label space {ds.space.n_classes}"
            )

    if ds.features.ndim == 2:
        report.nonfinite_feature_rows = int(
            (~np.isfinite(ds.features).all(axis=1)).sum()
        )
    if ds.candidates.ndim == 2:
        report.empty_candidate_rows = int((~ds.candidates.any(axis=1)).sum())

    if ds.oracle_labels is not None:
        y = ds.oracle_labels
        if y.size != ds.features.shape[0]:
            report.shape_mismatches.append(
                f"oracle labels {y.size} != features rows {ds.features.shape[0]}"
            )
        in_range = (y >= 0) & (y < ds.space.n_classes)
        report.oracle_out_of_range = int((~in_range).sum())
        if ds.class_counts is not None:
            counts = np.bincount(y[in_range], minlength=ds.space.n_classes)
            if ds.class_counts.size != ds.space.n_classes:
                report.class_count_mismatches = ds.space.n_classes
            else:
                report.class_count_mismatches = int(
                    (counts != ds.class_counts[: counts.size]).sum()
                )
        cov = ds.covered()
        if cov is not None and cov.size:
            report.covered_fraction = float(cov.mean())

    return report
