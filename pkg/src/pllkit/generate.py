"""Candidate-label generation: uniform subsets, independent flips,
instance-dependent sets from an auxiliary predictor, and long-tailed
subsampling.

Every generator returns a boolean (n_samples, n_classes) matrix whose row i
always contains the true label, and is a pure function of its inputs and the
seed.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .validation import as_rng, check_features, check_labels, check_unit_interval

STRATEGIES = ("uss", "fps", "instance")


@dataclass(frozen=True)
class GenSpec:
    """How to build candidate sets: strategy plus its knobs and a seed."""

    strategy: str = "fps"
    eta: Optional[float] = 0.5
    top_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}"
            )
        if self.strategy == "fps":
            if self.eta is None:
                raise ConfigError("fps strategy requires eta")
            check_unit_interval("eta", self.eta)
        if self.strategy == "instance":
            check_unit_interval("top_fraction", self.top_fraction, closed_right=True)


@dataclass(frozen=True)
class LongTailSpec:
    """Exponential class-imbalance profile with max/min count ratio gamma."""

    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if float(self.gamma) < 1.0:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")


def _one_hot_rows(labels, n_classes):
    out = np.zeros((labels.size, n_classes), dtype=bool)
    out[np.arange(labels.size), labels] = True
    return out


def gen_uss(labels, n_classes, seed=0):
    """Uniform-subset candidates: each false label enters with probability 1/2.

    Equivalent to drawing one of the 2^(n_classes-1) supersets of the true
    label uniformly at random; rows can be singletons.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    y = check_labels(labels, n_classes)
    rng = as_rng(seed)
    bits = rng.random((y.size, n_classes)) < 0.5
    bits[np.arange(y.size), y] = True
    return bits


def gen_fps(labels, n_classes, eta, seed=0):
    """Flip-probability candidates: each false label enters with probability eta.

    If no false label was drawn for a row, one uniformly random false label is
    added, so every row has size at least 2.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    eta = check_unit_interval("eta", eta)
    y = check_labels(labels, n_classes)
    rng = as_rng(seed)
    bits = rng.random((y.size, n_classes)) < eta
    bits[np.arange(y.size), y] = True

    lonely = np.flatnonzero(bits.sum(axis=1) == 1)
    if lonely.size:
        # add one uniform false label per fallback row
        offsets = rng.integers(0, n_classes - 1, size=lonely.size)
        flipped = offsets + (offsets >= y[lonely])
        bits[lonely, flipped] = True
    return bits


@dataclass
class AuxModel:
    """Linear softmax probe (weights, bias, standardization) on frozen features."""

    weights: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    train_accuracy: float

    def predict_proba(self, X):
        X = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        z = X @ self.weights.T + self.bias
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)


def train_aux_classifier(features, labels, n_classes, epochs=30, seed=0, lr=0.5, batch_size=64):
    """Fit the auxiliary linear softmax classifier by minibatch SGD.

    Features are standardized internally; weights start at zero, so the run is
    deterministic given the seed (which only drives the shuffle order).
    """
    X = check_features(features)
    if X.shape[1] < 1:
        raise ConfigError("feature dimension must be at least 1")
    y = check_labels(labels, n_classes, n_samples=X.shape[0])
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale

    n, d = Xs.shape
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    vel_w = np.zeros_like(W)
    vel_b = np.zeros_like(b)
    momentum = 0.9

    for epoch in range(int(epochs)):
        order = as_rng(np.random.SeedSequence((int(seed), epoch))).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = Xs[idx], y[idx]
            z = xb @ W.T + b
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(idx.size), yb] -= 1.0
            p /= idx.size
            gw = p.T @ xb
            gb = p.sum(axis=0)
            vel_w = momentum * vel_w + gw
            vel_b = momentum * vel_b + gb
            W -= lr * vel_w
            b -= lr * vel_b

    model = AuxModel(weights=W, bias=b, mean=mean, scale=scale, train_accuracy=0.0)
    model.train_accuracy = float((model.predict(X) == y).mean())
    return model


def gen_instance_dependent(features, labels, n_classes, top_fraction=0.1, seed=0,
                           aux_epochs=30, aux_model=None):
    """Candidates correlated with the instance: true label plus the auxiliary
    model's top-ceil(top_fraction * n_classes) predicted classes.

    Row sizes are m or m+1 depending on whether the true label already sits in
    the top-m pool. Probability ties are broken toward the smaller class index.
    """
    check_unit_interval("top_fraction", top_fraction, closed_right=True)
    if top_fraction * n_classes < 1:
        raise ConfigError(
            f"top_fraction {top_fraction} selects less than one of {n_classes} classes"
        )
    X = check_features(features)
    y = check_labels(labels, n_classes, n_samples=X.shape[0])
    if aux_model is None:
        aux_model = train_aux_classifier(X, y, n_classes, epochs=aux_epochs, seed=seed)
    proba = aux_model.predict_proba(X)

    m = int(np.ceil(top_fraction * n_classes))
    # stable sort on -proba: ties resolve to the smaller class index
    top = np.argsort(-proba, axis=1, kind="stable")[:, :m]
    bits = np.zeros((y.size, n_classes), dtype=bool)
    np.put_along_axis(bits, top, True, axis=1)
    bits[np.arange(y.size), y] = True
    return bits


def generate_candidates(spec, labels, n_classes, features=None):
    """Dispatch a GenSpec to the matching generator."""
    if spec.strategy == "uss":
        return gen_uss(labels, n_classes, seed=spec.seed)
    if spec.strategy == "fps":
        return gen_fps(labels, n_classes, spec.eta, seed=spec.seed)
    if features is None:
        raise ConfigError("instance-dependent generation requires features")
    return gen_instance_dependent(
        features, labels, n_classes, top_fraction=spec.top_fraction, seed=spec.seed
    )


def longtail_counts(n_max, n_classes, gamma):
    """Per-class keep counts floor(n_max * gamma^(-j/(n_classes-1))), j = 0..K-1."""
    if gamma < 1:
        raise ConfigError(f"gamma must be >= 1, got {gamma}")
    j = np.arange(n_classes, dtype=np.float64)
    counts = np.floor(n_max * gamma ** (-j / (n_classes - 1))).astype(np.int64)
    if counts[-1] < 1:
        raise ConfigError(
            f"gamma {gamma} too large: smallest class would keep {counts[-1]} samples"
        )
    return counts


def subsample_longtail_indices(labels, n_classes, gamma, seed=0):
    """Indices of a long-tailed subsample; classes ranked by descending count
    (ties toward the smaller class index) keep the exponential profile."""
    y = check_labels(labels, n_classes)
    present = np.bincount(y, minlength=n_classes)
    order = np.argsort(-present, kind="stable")
    counts = longtail_counts(int(present.max()), n_classes, float(gamma))

    rng = as_rng(seed)
    keep = []
    for rank, cls in enumerate(order):
        members = np.flatnonzero(y == cls)
        want = int(counts[rank])
        if want > members.size:
            raise ConfigError(
                f"class {cls} has {members.size} samples, profile wants {want} "
                "(input must be balanced at n_max)"
            )
        keep.append(rng.choice(members, size=want, replace=False))
    idx = np.concatenate(keep)
    idx.sort()
    return idx


def subsample_longtail(dataset, gamma, seed=0):
    """Long-tailed subsample of a dataset with oracle labels; class counts are
    recomputed on the retained rows."""
    if dataset.oracle_labels is None:
        raise ConfigError("long-tail subsampling requires oracle labels")
    idx = subsample_longtail_indices(
        dataset.oracle_labels, dataset.n_classes, gamma, seed=seed
    )
    return dataset.subset(idx)
