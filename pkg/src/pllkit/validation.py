"""Input validation helpers shared by the estimator, ops, and CLI."""

import numpy as np

from .errors import ConfigError, ShapeError

CONFIDENCE_ROW_TOL = 1e-5


def as_rng(seed):
    """Return a numpy Generator for an int seed, int tuple, or SeedSequence;
    Generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def check_features(X, allow_empty=False):
    """Coerce to a finite 2-D float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"features must be 2-D, got shape {X.shape}")
    if not allow_empty and (X.shape[0] < 1 or X.shape[1] < 1):
        raise ShapeError(f"features must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError("features contain non-finite values")
    return X


def check_candidates(S, n_samples=None, n_classes=None):
    """Coerce to a boolean matrix with non-empty rows and optional shape pins."""
    S = np.asarray(S)
    if S.ndim != 2:
        raise ShapeError(f"candidate matrix must be 2-D, got shape {S.shape}")
    S = S.astype(bool)
    if n_samples is not None and S.shape[0] != n_samples:
        raise ShapeError(f"candidate matrix has {S.shape[0]} rows, expected {n_samples}")
    if n_classes is not None and S.shape[1] != n_classes:
        raise ShapeError(f"candidate matrix has {S.shape[1]} classes, expected {n_classes}")
    empty = np.flatnonzero(~S.any(axis=1))
    if empty.size:
        raise ShapeError(f"candidate row {empty[0]} is empty")
    return S


def check_confidence(Z, n_samples=None, n_classes=None, tol=CONFIDENCE_ROW_TOL):
    """Coerce to a row-stochastic float64 matrix (rows on the simplex within tol)."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"confidence matrix must be 2-D, got shape {Z.shape}")
    if n_samples is not None and Z.shape[0] != n_samples:
        raise ShapeError(f"confidence matrix has {Z.shape[0]} rows, expected {n_samples}")
    if n_classes is not None and Z.shape[1] != n_classes:
        raise ShapeError(f"confidence matrix has {Z.shape[1]} classes, expected {n_classes}")
    if not np.all(np.isfinite(Z)):
        raise ShapeError("confidence matrix contains non-finite values")
    if Z.min(initial=0.0) < -tol:
        raise ShapeError("confidence matrix has negative entries")
    sums = Z.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.size and off.max() > tol:
        i = int(off.argmax())
        raise ShapeError(f"confidence row {i} sums to {sums[i]:.6f}, expected 1")
    return Z


def check_labels(y, n_classes, n_samples=None):
    """Coerce to an int64 vector of class indices in [0, n_classes)."""
    y = np.asarray(y, dtype=np.int64).ravel()
    if n_samples is not None and y.size != n_samples:
        raise ShapeError(f"label vector has {y.size} entries, expected {n_samples}")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes})")
    return y


def check_positive(name, value, strict=True):
    value = float(value)
    if (value <= 0) if strict else (value < 0):
        bound = "positive" if strict else "non-negative"
        raise ConfigError(f"{name} must be {bound}, got {value}")
    return value


def check_unit_interval(name, value, closed_right=False):
    value = float(value)
    hi_ok = value <= 1 if closed_right else value < 1
    if not (0 < value and hi_ok):
        hi = "1]" if closed_right else "1)"
        raise ConfigError(f"{name} must be in (0, {hi}, got {value}")
    return value
