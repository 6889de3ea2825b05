import numpy as np
import pytest


def make_blobs(n_per_class, n_classes, dim, seed, sep=4.0):
    """Gaussian blobs with class means at pairwise distance sep (unit noise).

    When n_classes <= dim the means sit at (sep/sqrt(2)) * e_j, making every
    pairwise distance exactly sep; otherwise random near-orthogonal
    directions approximate it. Returns (X, y, means).
    """
    rng = np.random.default_rng(seed)
    if n_classes <= dim:
        means = np.zeros((n_classes, dim))
        for j in range(n_classes):
            means[j, j] = sep / np.sqrt(2)
    else:
        means = rng.normal(size=(n_classes, dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True)
        means *= sep / np.sqrt(2)
    X, y = [], []
    for j in range(n_classes):
        X.append(means[j] + rng.normal(0.0, 1.0, (n_per_class, dim)))
        y.append(np.full(n_per_class, j))
    X = np.vstack(X)
    y = np.concatenate(y)
    perm = rng.permutation(y.size)
    return X[perm], y[perm], means


def singleton_candidates(labels, n_classes):
    S = np.zeros((labels.size, n_classes), dtype=bool)
    S[np.arange(labels.size), labels] = True
    return S


def random_instance(rng, max_batch=4, max_classes=6):
    """Random (logits, candidates) pair with non-empty candidate rows."""
    B = int(rng.integers(1, max_batch + 1))
    K = int(rng.integers(2, max_classes + 1))
    logits = rng.normal(0.0, 2.0, (B, K))
    S = np.zeros((B, K), dtype=bool)
    for i in range(B):
        m = int(rng.integers(1, K + 1))
        S[i, rng.choice(K, m, replace=False)] = True
    return logits, S


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
