"""Zero-shot confidence from embedding geometry and top-k candidate filtering."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .validation import check_candidates, check_confidence, check_features

DEFAULT_TEMPERATURE = 0.01


@dataclass(frozen=True)
class FilterSpec:
    """Top-k retention spec; k defaults to floor(n_classes / 2) at filter time."""

    k: Optional[int] = None
    fallback: str = "keep_argmax_in_s"

    def __post_init__(self):
        if self.k is not None and int(self.k) < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.fallback != "keep_argmax_in_s":
            raise ConfigError(f"unknown fallback {self.fallback!r}")

    def resolve_k(self, n_classes):
        k = n_classes // 2 if self.k is None else int(self.k)
        if not 1 <= k <= n_classes:
            raise ConfigError(f"k must be in [1, {n_classes}], got {k}")
        return k


def _unit_rows(M, what):
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(norms == 0):
        row = int(np.flatnonzero(norms.ravel() == 0)[0])
        raise NumericalError(f"zero vector in {what} row {row}")
    return M / norms


def zeroshot_confidence(image_feats, text_feats, temperature=DEFAULT_TEMPERATURE):
    """Row-stochastic confidences: softmax over cosine similarities to each
    class embedding, sharpened by 1/temperature.

    Invariant to positive rescaling of any input row.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    I = check_features(image_feats)
    T = check_features(text_feats)
    if I.shape[1] != T.shape[1]:
        raise ConfigError(
            f"feature dims differ: images {I.shape[1]}, text {T.shape[1]}"
        )
    sims = _unit_rows(I, "image features") @ _unit_rows(T, "text features").T
    z = sims / temperature
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def top_k_indices(conf, k):
    """Indices of the k largest entries per row, ties toward the smaller index."""
    return np.argsort(-conf, axis=1, kind="stable")[:, :k]


def filter_topk(candidates, conf, spec=None):
    """Keep only candidates among the top-k most confident classes per row.

    The output row is the intersection of the candidate row with the top-k
    set; when that intersection is empty, the single most-confident candidate
    is kept instead, so no row ever comes back empty. Output rows are always
    subsets of the input rows of size at most k.
    """
    if spec is None:
        spec = FilterSpec()
    elif isinstance(spec, int):
        spec = FilterSpec(k=spec)
    S = check_candidates(candidates)
    Z = check_confidence(conf, n_samples=S.shape[0], n_classes=S.shape[1])
    k = spec.resolve_k(S.shape[1])

    top = top_k_indices(Z, k)
    in_top = np.zeros_like(S)
    np.put_along_axis(in_top, top, True, axis=1)
    out = S & in_top

    empty = np.flatnonzero(~out.any(axis=1))
    if empty.size:
        masked = np.where(S[empty], Z[empty], -np.inf)
        best = masked.argmax(axis=1)
        out[empty, best] = True
    return out


@dataclass(frozen=True)
class SizeStats:
    """Candidate-set cardinality summary, plus oracle coverage when known."""

    mean: float
    min: int
    max: int
    coverage: Optional[float] = None


def candidate_stats(candidates, oracle_labels=None):
    """Mean/min/max row cardinality and coverage rate of the oracle labels."""
    S = check_candidates(candidates)
    sizes = S.sum(axis=1)
    coverage = None
    if oracle_labels is not None:
        y = np.asarray(oracle_labels, dtype=np.int64).ravel()
        coverage = float(S[np.arange(y.size), y].mean())
    return SizeStats(
        mean=float(sizes.mean()),
        min=int(sizes.min()),
        max=int(sizes.max()),
        coverage=coverage,
    )
