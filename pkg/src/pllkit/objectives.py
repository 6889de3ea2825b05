"""Disambiguation objectives over candidate label sets.

Every loss op takes a (batch, n_classes) logit matrix plus the batch's boolean
candidate rows and returns the scalar mean loss together with the analytic
gradient with respect to the logits. Probabilities are clamped at 1e-12
before any log; clamps raise NumericalWarning.

Naming below: p is the row-wise softmax of the logits, S a candidate row.
"""

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError, NumericalWarning, PLLWarning, ShapeError
from .validation import check_candidates

CLAMP = 1e-12
PRIOR_CLAMP = 1e-8


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_pair(logits, candidates):
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {z.shape}")
    S = check_candidates(candidates, n_samples=z.shape[0], n_classes=z.shape[1])
    return z, S


def _warn_clamped(name, n):
    if n:
        warnings.warn(f"{name}: clamped {n} underflowing rows", NumericalWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# candidate-marginal and weighted losses

def loss_cc(logits, candidates):
    """Negative log of the probability mass inside the candidate set.

    Per row: -log sum_{j in S} p_j. Zero when S is the full label set, plain
    cross-entropy when S is a singleton.
    """
    z, S = _check_pair(logits, candidates)
    p = softmax(z)
    s = (p * S).sum(axis=1)
    clamped = s < CLAMP
    _warn_clamped("loss_cc", int(clamped.sum()))
    s = np.maximum(s, CLAMP)
    loss = float(np.mean(-np.log(s)))
    grad = (p - (p * S) / s[:, None]) / z.shape[0]
    return loss, grad


def proden_update(p_all, candidates):
    """Recompute identification weights: p restricted to S, renormalized per row.

    Rows whose candidate mass underflows fall back to uniform over S.
    """
    p, S = _check_pair(p_all, candidates)
    w = p * S
    s = w.sum(axis=1)
    bad = s < CLAMP
    _warn_clamped("proden_update", int(bad.sum()))
    if bad.any():
        w[bad] = S[bad] / S[bad].sum(axis=1, keepdims=True)
        s[bad] = 1.0
    return w / s[:, None]


def loss_weighted_ce(logits, weights):
    """Cross-entropy against per-row target distributions; gradient is p - w."""
    z = np.asarray(logits, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if z.shape != w.shape:
        raise ShapeError(f"logits {z.shape} and weights {w.shape} differ")
    sums = w.sum(axis=1)
    if np.abs(sums - 1.0).max(initial=0.0) > 1e-5:
        raise ShapeError("weight rows must sum to 1")
    logp = log_softmax(z)
    loss = float(np.mean(-(w * logp).sum(axis=1)))
    grad = (softmax(z) - w) / z.shape[0]
    return loss, grad


def lws_weights(p, candidates):
    """Leverage weights: p renormalized within S and within its complement."""
    p, S = _check_pair(p, candidates)
    w = np.zeros_like(p)
    comp = ~S
    for mask, name in ((S, "candidate"), (comp, "complement")):
        part = p * mask
        s = part.sum(axis=1)
        rows = mask.any(axis=1)
        bad = rows & (s < CLAMP)
        _warn_clamped(f"lws_weights ({name})", int(bad.sum()))
        if bad.any():
            part[bad] = mask[bad] / mask[bad].sum(axis=1, keepdims=True)
            s[bad] = 1.0
        s[~rows] = 1.0
        w += part / s[:, None]
    return w


def loss_lws(logits, candidates, beta=1.0, weights=None):
    """Leveraged sigmoid loss: sum_{z in S} w_z psi(g_z) plus beta times
    sum_{z not in S} w_z psi(-g_z), with psi(x) = 1/(1 + e^x).

    Weights default to the current-model probabilities renormalized within S
    and within the complement, and are treated as constants by the gradient
    (pass explicit weights to check against finite differences).
    """
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}")
    z, S = _check_pair(logits, candidates)
    if weights is None:
        weights = lws_weights(softmax(z), S)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != z.shape:
        raise ShapeError(f"weights {w.shape} do not match logits {z.shape}")

    psi = _sigmoid(-z)           # psi(g)
    psi_neg = _sigmoid(z)        # psi(-g)
    per_row = (w * S * psi).sum(axis=1) + beta * (w * ~S * psi_neg).sum(axis=1)
    loss = float(per_row.mean())
    slope = psi * psi_neg        # psi(g) * psi(-g), shared by both branches
    grad = np.where(S, -w * slope, beta * w * slope) / z.shape[0]
    return loss, grad


def loss_cavl(logits, candidates):
    """Cross-entropy to the most activated candidate, selection detached.

    The target is argmax of the logits restricted to S (ties toward the
    smaller class index); no gradient flows through the selection.
    """
    z, S = _check_pair(logits, candidates)
    masked = np.where(S, z, -np.inf)
    target = masked.argmax(axis=1)
    logp = log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = float(np.mean(-logp[rows, target]))
    grad = softmax(z)
    grad[rows, target] -= 1.0
    return loss, grad / z.shape[0]


def loss_abs_mae(logits, candidates):
    """Mean absolute error averaged over the candidate set.

    Per candidate j the row loss term is sum_c |p_c - [c == j]| = 2(1 - p_j).
    """
    z, S = _check_pair(logits, candidates)
    p = softmax(z)
    sizes = S.sum(axis=1)
    s = (p * S).sum(axis=1)
    loss = float(np.mean(2.0 - 2.0 * s / sizes))
    grad = (2.0 / sizes[:, None]) * p * (s[:, None] - S) / z.shape[0]
    return loss, grad


def loss_abs_gce(logits, candidates, q=0.7):
    """Generalized cross-entropy (1 - p_j^q) / q averaged over the candidate set.

    Approaches 1 - p_j as q -> 1 and -log p_j as q -> 0.
    """
    if not 0 < q <= 1:
        raise ConfigError(f"q must be in (0, 1], got {q}")
    z, S = _check_pair(logits, candidates)
    p = softmax(z)
    sizes = S.sum(axis=1)
    pq = p**q
    loss = float(np.mean(((1.0 - pq) / q * S).sum(axis=1) / sizes))
    sq = (pq * S).sum(axis=1)
    grad = (p * sq[:, None] - pq * S) / sizes[:, None] / z.shape[0]
    return loss, grad


# ---------------------------------------------------------------------------
# consistency objective on feature-space views

def crd_views(features, noise_sigma, rng):
    """Two Gaussian-perturbed copies of the batch features."""
    F = np.asarray(features, dtype=np.float64)
    if noise_sigma == 0:
        return F.copy(), F.copy()
    return (
        F + rng.normal(0.0, noise_sigma, size=F.shape),
        F + rng.normal(0.0, noise_sigma, size=F.shape),
    )


def _exclusion_term(z, S):
    """Mean over rows of sum_{j not in S} -log(1 - p_j), with its logit gradient."""
    p = softmax(z)
    comp = ~S
    one_minus = 1.0 - p
    clamped = comp & (one_minus < CLAMP)
    _warn_clamped("exclusion term", int(clamped.any(axis=1).sum()))
    one_minus = np.maximum(one_minus, CLAMP)
    loss = float(np.mean((comp * -np.log(one_minus)).sum(axis=1)))
    ratio = np.where(comp, p / one_minus, 0.0)
    grad = (ratio - p * ratio.sum(axis=1, keepdims=True)) / z.shape[0]
    return loss, grad


def _masked_log_softmax(z, S):
    masked = np.where(S, z, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    return masked - m - np.log(e.sum(axis=1, keepdims=True))


def crd_loss_from_logits(logits_a, logits_b, candidates, lam=1.0):
    """Exclusion of non-candidates averaged over both views, plus lam times the
    KL divergence between the views' candidate-restricted distributions.

    Returns (loss, grad_a, grad_b); both gradients are exact, including the
    dependence of the KL term on each view.
    """
    if lam < 0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    za, S = _check_pair(logits_a, candidates)
    zb, _ = _check_pair(logits_b, candidates)
    if za.shape != zb.shape:
        raise ShapeError(f"view logits differ: {za.shape} vs {zb.shape}")
    B = za.shape[0]

    loss_a, grad_a = _exclusion_term(za, S)
    loss_b, grad_b = _exclusion_term(zb, S)
    loss = 0.5 * (loss_a + loss_b)
    grad_a = 0.5 * grad_a
    grad_b = 0.5 * grad_b

    if lam > 0:
        la = _masked_log_softmax(za, S)
        lb = _masked_log_softmax(zb, S)
        pa = np.where(S, np.exp(la), 0.0)
        pb = np.where(S, np.exp(lb), 0.0)
        diff = np.zeros_like(la)
        np.subtract(la, lb, out=diff, where=S)
        kl_rows = (pa * diff).sum(axis=1)
        loss += lam * float(kl_rows.mean())
        grad_a += lam * pa * (diff - kl_rows[:, None]) / B
        grad_b += lam * (pb - pa) / B

    return loss, grad_a, grad_b


def loss_crd_feat(features, model, candidates, lam=1.0, noise_sigma=0.1, seed=0):
    """Convenience wrapper: build the two views, run the model, and return the
    mean loss with the per-view logit gradients stacked as (2, batch, classes)."""
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fa, fb = crd_views(features, noise_sigma, rng)
    loss, ga, gb = crd_loss_from_logits(
        model.logits(fa), model.logits(fb), candidates, lam=lam
    )
    return loss, np.stack([ga, gb])


# ---------------------------------------------------------------------------
# class-prior debiasing state

@dataclass(frozen=True)
class RecordsState:
    """Momentum feature prototype and the class prior read off it."""

    prototype: Optional[np.ndarray] = None
    prior: Optional[np.ndarray] = None


def records_update(state, batch_features, m, logits_fn):
    """Advance the momentum prototype with the batch mean and refresh the prior.

    The prototype starts at the first batch mean; the prior is the softmax of
    the classifier's logits on the prototype.
    """
    if not 0 <= m < 1:
        raise ConfigError(f"momentum must be in [0, 1), got {m}")
    mean = np.asarray(batch_features, dtype=np.float64).mean(axis=0)
    if state.prototype is None:
        proto = mean
    else:
        proto = m * state.prototype + (1.0 - m) * mean
    prior = softmax(np.asarray(logits_fn(proto[None, :]), dtype=np.float64))[0]
    return RecordsState(prototype=proto, prior=prior)


def records_debias(logits, pi_hat, tau):
    """Subtract tau * log(prior) from the logits; uniform priors only shift
    rows by a constant, so the argmax is unchanged."""
    z = np.asarray(logits, dtype=np.float64)
    if tau == 0:
        return z.copy()
    prior = np.maximum(np.asarray(pi_hat, dtype=np.float64), PRIOR_CLAMP)
    return z - tau * np.log(prior)


def records_adjust(logits, pi_hat, tau):
    """Train-time counterpart of records_debias: add tau * log(prior) to the
    loss logits so the fitted raw logits absorb the inverse correction and
    raw-argmax predictions come out class-balanced."""
    return records_debias(logits, pi_hat, -tau)


# ---------------------------------------------------------------------------
# optimal-transport pseudo-labels

def sinkhorn_assign(p_batch, candidates, r, eps=0.05, iters=100, tol=1e-3,
                    warn_on_cap=True):
    """Transport plan with uniform row marginals 1/B and column marginals r,
    supported only on candidate entries.

    The batch probabilities are masked to the candidate rows and renormalized,
    sharpened into the entropic kernel exp(log M / eps) in log space, then
    alternately row/column scaled until both marginal residuals drop below tol
    or `iters` rounds elapse. Columns with prior mass but no candidate support
    in the batch are dropped from r for this batch (with a warning). When r is
    infeasible for the batch's candidate pattern the iteration cannot reach
    tol; the capped-iteration plan is returned (warn_on_cap controls the
    warning, which training loops switch off).
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    p, S = _check_pair(p_batch, candidates)
    B, K = p.shape

    M = p * S
    s = M.sum(axis=1)
    bad = s < CLAMP
    _warn_clamped("sinkhorn_assign", int(bad.sum()))
    if bad.any():
        M[bad] = S[bad] / S[bad].sum(axis=1, keepdims=True)
        s[bad] = 1.0
    M = M / s[:, None]

    r = np.asarray(r, dtype=np.float64).copy()
    if r.shape != (K,):
        raise ShapeError(f"r must have shape ({K},), got {r.shape}")
    if r.min() < 0 or not np.isfinite(r).all():
        raise ShapeError("r must be a non-negative finite vector")
    r = r / r.sum()

    supported = S.any(axis=0)
    dropped = (~supported) & (r > 0)
    if dropped.any():
        warnings.warn(
            f"sinkhorn_assign: dropping prior mass {r[dropped].sum():.4f} on "
            f"{int(dropped.sum())} classes without candidate support in this batch",
            PLLWarning,
            stacklevel=2,
        )
        r = r * supported
        if r.sum() <= 0:
            raise NumericalError("no candidate support for any positive-prior class")
        r = r / r.sum()

    with np.errstate(divide="ignore"):
        log_ker = np.where(M > 0, np.log(np.maximum(M, CLAMP)) / eps, -np.inf)
        log_r = np.where(r > 0, np.log(np.maximum(r, CLAMP)), -np.inf)
    if np.any(np.all(np.isneginf(np.where(r > 0, log_ker, -np.inf)), axis=1)):
        raise NumericalError("a row has no candidate class with positive prior")

    log_row = -np.log(B)
    live = r > 0
    log_u = np.zeros(B)
    log_v = np.where(live, 0.0, -np.inf)
    for _ in range(int(iters)):
        log_u = log_row - _logsumexp(log_ker + log_v[None, :], axis=1)
        col = _logsumexp(log_ker + log_u[:, None], axis=0)
        log_v = np.where(live, log_r - np.where(live, col, 0.0), -np.inf)
        Q = np.exp(log_u[:, None] + log_ker + log_v[None, :])
        row_res = np.abs(Q.sum(axis=1) - 1.0 / B).max()
        col_res = np.abs(Q.sum(axis=0) - r).max()
        if max(row_res, col_res) < tol:
            break
    else:
        if warn_on_cap:
            warnings.warn(
                f"sinkhorn_assign: residual {max(row_res, col_res):.2e} after "
                f"{iters} iterations",
                NumericalWarning,
                stacklevel=2,
            )
    return Q


def _logsumexp(a, axis):
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# progressive candidate purification

def pop_purify(working, p_all, epoch, purge_rate):
    """Drop candidates far below the row's best candidate probability.

    The threshold ramps as min(purge_rate * epoch, 0.95); label j leaves the
    working set when p_ij < threshold * max_{j' in working} p_ij'. The row
    argmax always survives, so rows never empty, and bits are only ever
    cleared, so working sets shrink monotonically across epochs.
    """
    if not 0 < purge_rate < 1:
        raise ConfigError(f"purge_rate must be in (0, 1), got {purge_rate}")
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    p, W = _check_pair(p_all, working)
    theta = min(purge_rate * epoch, 0.95)
    if theta <= 0:
        return W.copy()
    best = np.where(W, p, -np.inf).max(axis=1)
    keep = W & (p >= theta * best[:, None])
    return keep


# ---------------------------------------------------------------------------
# objective configuration

BASE_KINDS = ("cc", "proden", "lws", "cavl", "abs_mae", "abs_gce", "crd", "solar")
WRAPPER_KINDS = ("records", "pop")


@dataclass(frozen=True)
class Objective:
    """An objective kind plus its knobs; wrappers carry a non-wrapping base."""

    kind: str = "cc"
    beta: float = 1.0
    q: float = 0.7
    lam: float = 1.0
    noise_sigma: float = 0.1
    m: float = 0.9
    tau: float = 1.0
    sinkhorn_eps: float = 0.05
    sinkhorn_iters: int = 100
    dist_momentum: float = 0.9
    purge_rate: float = 0.02
    base: Optional["Objective"] = None

    def __post_init__(self):
        if self.kind not in BASE_KINDS + WRAPPER_KINDS:
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not 0 < self.q <= 1:
            raise ConfigError(f"q must be in (0, 1], got {self.q}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.m < 1:
            raise ConfigError(f"m must be in [0, 1), got {self.m}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.sinkhorn_eps <= 0:
            raise ConfigError(f"sinkhorn_eps must be positive, got {self.sinkhorn_eps}")
        if self.sinkhorn_iters < 1:
            raise ConfigError(f"sinkhorn_iters must be >= 1, got {self.sinkhorn_iters}")
        if not 0 <= self.dist_momentum < 1:
            raise ConfigError(
                f"dist_momentum must be in [0, 1), got {self.dist_momentum}"
            )
        if not 0 < self.purge_rate < 1:
            raise ConfigError(f"purge_rate must be in (0, 1), got {self.purge_rate}")
        if self.kind in WRAPPER_KINDS:
            if self.base is None:
                raise ConfigError(f"{self.kind} requires a base objective")
            if self.base.kind in WRAPPER_KINDS:
                raise ConfigError("wrappers cannot wrap another wrapper")
        elif self.base is not None:
            raise ConfigError(f"{self.kind} does not take a base objective")

    @property
    def name(self):
        if self.base is not None:
            return f"{self.kind}:{self.base.name}"
        return self.kind


def parse_objective(spec, **params):
    """Build an Objective from a name like "cc", "abs_gce", or "records:cc".

    Keyword params apply to both the wrapper and its base (each reads only the
    fields it uses).
    """
    if isinstance(spec, Objective):
        return replace(spec, **params) if params else spec
    parts = str(spec).strip().lower().split(":")
    if len(parts) == 1:
        return Objective(kind=parts[0], **params)
    if len(parts) == 2:
        base = Objective(kind=parts[1], **params)
        return Objective(kind=parts[0], base=base, **params)
    raise ConfigError(f"cannot parse objective {spec!r}")
