"""Cosine classifier on frozen features, optional residual bottleneck adapter,
SGD with momentum and weight decay, and the disambiguation training loop."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import objectives as obj
from .errors import ConfigError, NumericalError
from .formats import MAGIC_MODEL
from .metrics import MetricBlock, accuracy, evaluate_block
from .validation import check_candidates, check_features, check_labels
from .zeroshot import filter_topk

_HEADER = np.dtype("<u4")
_VALUE = np.dtype("<f4")


def default_adapter_dim(n_classes, dim):
    """Bottleneck width 2^floor(log2(K/2)) clamped into [4, dim/2]."""
    r = 2 ** int(np.floor(np.log2(max(n_classes / 2, 1))))
    return max(1, min(max(r, 4), dim // 2))


@dataclass
class FeatureAdapter:
    """Residual bottleneck f + scale * relu(f W_down^T) W_up^T.

    W_up starts at zero, so a fresh adapter is exactly the identity.
    """

    w_down: np.ndarray
    w_up: np.ndarray
    scale: float = 1.0

    @classmethod
    def init(cls, dim, bottleneck, rng, scale=1.0):
        w_down = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(bottleneck, dim))
        return cls(w_down=w_down, w_up=np.zeros((dim, bottleneck)), scale=scale)

    def forward(self, F):
        h = F @ self.w_down.T
        a = np.maximum(h, 0.0)
        return F + self.scale * a @ self.w_up.T, (h, a, F)

    def backward(self, cache, d_out):
        h, a, F = cache
        g_up = self.scale * d_out.T @ a
        dh = (self.scale * d_out @ self.w_up) * (h > 0)
        g_down = dh.T @ F
        return {"w_down": g_down, "w_up": g_up}


class CosineModel:
    """Scaled cosine similarity head: logits_j = sigma * cos(W_j, f).

    Logits are invariant to positive rescaling of the input feature and live
    in [-sigma, sigma]. No bias term.
    """

    def __init__(self, weights, sigma=25.0, adapter=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.sigma = float(sigma)
        self.adapter = adapter
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {sigma}")
        if np.any(np.linalg.norm(self.weights, axis=1) == 0):
            raise ConfigError("classifier rows must be nonzero")

    @classmethod
    def init_random(cls, n_classes, dim, rng, sigma=25.0, adapter=None):
        return cls(rng.normal(0.0, 1.0, size=(n_classes, dim)), sigma=sigma, adapter=adapter)

    @classmethod
    def init_from_text(cls, text_feats, sigma=25.0, adapter=None):
        """Unit-normalized class text embeddings as initial class directions."""
        T = check_features(text_feats)
        norms = np.linalg.norm(T, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ConfigError("text embedding rows must be nonzero")
        return cls(T / norms, sigma=sigma, adapter=adapter)

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def forward(self, F):
        F = np.asarray(F, dtype=np.float64)
        cache = {}
        if self.adapter is not None:
            g, cache["adapter"] = self.adapter.forward(F)
        else:
            g = F
        g_norms = np.linalg.norm(g, axis=1, keepdims=True)
        if np.any(g_norms == 0):
            raise NumericalError("zero feature vector reached the cosine head")
        w_norms = np.linalg.norm(self.weights, axis=1, keepdims=True)
        g_hat = g / g_norms
        w_hat = self.weights / w_norms
        logits = self.sigma * g_hat @ w_hat.T
        cache.update(g_hat=g_hat, g_norms=g_norms, w_hat=w_hat, w_norms=w_norms)
        return logits, cache

    def logits(self, F):
        return self.forward(F)[0]

    def predict(self, F):
        return self.logits(F).argmax(axis=1)

    def predict_proba(self, F):
        return obj.softmax(self.logits(F))

    def backward(self, cache, d_logits):
        """Parameter gradients for a loss with logit gradient d_logits."""
        g_hat, w_hat = cache["g_hat"], cache["w_hat"]
        d_w_hat = self.sigma * d_logits.T @ g_hat
        g_w = (d_w_hat - (d_w_hat * w_hat).sum(axis=1, keepdims=True) * w_hat) / cache["w_norms"]
        grads = {"weights": g_w}
        if self.adapter is not None:
            d_g_hat = self.sigma * d_logits @ w_hat
            d_g = (d_g_hat - (d_g_hat * g_hat).sum(axis=1, keepdims=True) * g_hat) / cache["g_norms"]
            grads.update(self.adapter.backward(cache["adapter"], d_g))
        return grads

    def params(self):
        out = {"weights": self.weights}
        if self.adapter is not None:
            out["w_down"] = self.adapter.w_down
            out["w_up"] = self.adapter.w_up
        return out


def sgd_step(params, grads, velocity, lr, momentum, weight_decay, decay_mask=None):
    """One SGD update: v <- momentum*v + grad + wd*param; param <- param - lr*v.

    Weight decay folds into the gradient; velocity starts at zero. decay_mask
    can switch decay off per parameter. Mutates params and velocity in place.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
        wd = weight_decay
        if decay_mask is not None and not decay_mask.get(name, True):
            wd = 0.0
        v = velocity.setdefault(name, np.zeros_like(p))
        v *= momentum
        v += g + wd * p
        p -= lr * v
    return params, velocity


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings and the objective selection for fit()."""

    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    objective: object = "cc"
    sigma: float = 25.0
    use_adapter: bool = False
    adapter_dim: Optional[int] = None
    adapter_scale: float = 1.0
    text_init: Optional[np.ndarray] = None
    protect_init: bool = False
    prefilter_k: Optional[int] = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "objective", obj.parse_objective(self.objective))


@dataclass
class ObjectiveState:
    """Mutable per-objective training state, initialized by fit()."""

    proden_weights: Optional[np.ndarray] = None
    records: obj.RecordsState = field(default_factory=obj.RecordsState)
    solar_dist: Optional[np.ndarray] = None
    pop_working: Optional[np.ndarray] = None


@dataclass
class EpochStats:
    loss: float
    train_acc: Optional[float] = None
    test_acc: Optional[float] = None


@dataclass
class TrainReport:
    """Per-epoch trajectory plus the final metric block."""

    objective: str
    epochs: list
    final: Optional[MetricBlock] = None


def _epoch_rng(seed, epoch, stream):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((int(seed), int(epoch), int(stream))))
    )


def _base_loss(kind, spec, logits, cand_rows, state, idx):
    if kind == "cc":
        return obj.loss_cc(logits, cand_rows)
    if kind == "proden":
        return obj.loss_weighted_ce(logits, state.proden_weights[idx])
    if kind == "lws":
        return obj.loss_lws(logits, cand_rows, beta=spec.beta)
    if kind == "cavl":
        return obj.loss_cavl(logits, cand_rows)
    if kind == "abs_mae":
        return obj.loss_abs_mae(logits, cand_rows)
    if kind == "abs_gce":
        return obj.loss_abs_gce(logits, cand_rows, q=spec.q)
    raise ConfigError(f"objective kind {kind!r} cannot be computed from logits alone")


def fit(dataset, conf=None, cfg=None, eval_features=None, eval_labels=None,
        eval_candidates=None):
    """Train the cosine classifier on a partial-label dataset.

    Per epoch: seeded shuffle, minibatch forward through the optional adapter
    and the cosine head, objective loss and logit gradient, SGD step, then the
    end-of-epoch state updates (identification weights on the full set,
    candidate purification, class-distribution refresh). Returns the model,
    the final objective state, and a TrainReport.
    """
    if cfg is None:
        cfg = TrainConfig()
    if dataset.n_samples == 0:
        raise ConfigError("cannot train on an empty dataset")
    X = check_features(dataset.features)
    S = check_candidates(dataset.candidates, n_samples=X.shape[0],
                         n_classes=dataset.n_classes)
    if conf is not None and cfg.prefilter_k is not None:
        S = filter_topk(S, conf, cfg.prefilter_k)

    n, d = X.shape
    K = dataset.n_classes
    spec = cfg.objective
    kind = spec.kind
    base = spec.base if kind in obj.WRAPPER_KINDS else None
    inner = base.kind if base is not None else kind

    rng_init = _epoch_rng(cfg.seed, 0, 0)
    adapter = None
    if cfg.use_adapter:
        r = cfg.adapter_dim or default_adapter_dim(K, d)
        adapter = FeatureAdapter.init(d, r, rng_init, scale=cfg.adapter_scale)
    if cfg.text_init is not None:
        model = CosineModel.init_from_text(cfg.text_init, sigma=cfg.sigma, adapter=adapter)
        if model.n_classes != K or model.dim != d:
            raise ConfigError(
                f"text init is {model.n_classes}x{model.dim}, dataset needs {K}x{d}"
            )
    else:
        model = CosineModel.init_random(K, d, rng_init, sigma=cfg.sigma, adapter=adapter)

    state = ObjectiveState()
    inner_spec = base if base is not None else spec
    if inner == "proden":
        state.proden_weights = S / S.sum(axis=1, keepdims=True)
    if inner == "solar":
        state.solar_dist = np.full(K, 1.0 / K)
    if kind == "pop":
        state.pop_working = S.copy()

    velocity = {}
    oracle = dataset.oracle_labels
    epochs_out = []

    for epoch in range(cfg.epochs):
        order = _epoch_rng(cfg.seed, epoch, 1).permutation(n)
        crd_rng = _epoch_rng(cfg.seed, epoch, 2)
        decay_mask = None
        if cfg.protect_init and cfg.text_init is not None and epoch == 0:
            decay_mask = {"weights": False}
        solar_cols = np.zeros(K)
        solar_rows = 0
        losses = []

        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            Fb = X[idx]
            rows = state.pop_working[idx] if kind == "pop" else S[idx]

            if kind == "records":
                state.records = obj.records_update(state.records, Fb, spec.m, model.logits)

            def transform(z):
                if kind == "records":
                    return obj.records_adjust(z, state.records.prior, spec.tau)
                return z

            if inner == "crd":
                fa, fb = obj.crd_views(Fb, inner_spec.noise_sigma, crd_rng)
                za, cache_a = model.forward(fa)
                zb, cache_b = model.forward(fb)
                loss, ga, gb = obj.crd_loss_from_logits(
                    transform(za), transform(zb), rows, lam=inner_spec.lam
                )
                grads = model.backward(cache_a, ga)
                for name, g in model.backward(cache_b, gb).items():
                    grads[name] += g
            else:
                z, cache = model.forward(Fb)
                zt = transform(z)
                if inner == "solar":
                    Q = obj.sinkhorn_assign(
                        obj.softmax(zt), rows, state.solar_dist,
                        eps=inner_spec.sinkhorn_eps, iters=inner_spec.sinkhorn_iters,
                        warn_on_cap=False,
                    )
                    qsum = Q.sum(axis=1, keepdims=True)
                    # rows starved by an infeasible prior fall back to uniform over S
                    starved = qsum.ravel() < 1e-30
                    w = np.where(
                        starved[:, None],
                        rows / rows.sum(axis=1, keepdims=True),
                        Q / np.maximum(qsum, 1e-300),
                    )
                    loss, g = obj.loss_weighted_ce(zt, w)
                    solar_cols += w.sum(axis=0)
                    solar_rows += w.shape[0]
                else:
                    loss, g = _base_loss(inner, inner_spec, zt, rows, state, idx)
                grads = model.backward(cache, g)

            sgd_step(model.params(), grads, velocity, cfg.lr, cfg.momentum,
                     cfg.weight_decay, decay_mask)
            losses.append(loss)

        # end-of-epoch state refreshes on the full training set
        if inner == "proden" or kind == "pop":
            z_all = model.logits(X)
            if kind == "records":
                z_all = obj.records_adjust(z_all, state.records.prior, spec.tau)
            p_all = obj.softmax(z_all)
            if inner == "proden":
                rows_all = state.pop_working if kind == "pop" else S
                state.proden_weights = obj.proden_update(p_all, rows_all)
            if kind == "pop":
                state.pop_working = obj.pop_purify(
                    state.pop_working, p_all, epoch, spec.purge_rate
                )
        if inner == "solar" and solar_rows:
            empirical = solar_cols / solar_rows
            state.solar_dist = (
                inner_spec.dist_momentum * state.solar_dist
                + (1.0 - inner_spec.dist_momentum) * empirical
            )

        stats = EpochStats(loss=float(np.mean(losses)))
        if oracle is not None:
            stats.train_acc = accuracy(model.predict(X), oracle)
        if eval_features is not None and eval_labels is not None:
            stats.test_acc = accuracy(model.predict(eval_features), eval_labels)
        epochs_out.append(stats)

    final = None
    if eval_features is not None:
        preds = model.predict(eval_features)
        y_eval = None if eval_labels is None else check_labels(eval_labels, K)
        final = evaluate_block(
            preds,
            oracle_labels=y_eval,
            candidates=eval_candidates,
            train_class_counts=dataset.class_counts,
        )
    report = TrainReport(objective=spec.name, epochs=epochs_out, final=final)
    return model, state, report


def save_model(model, path):
    """Checkpoint layout: magic, u32 K, u32 d, u8 has_adapter, f32 sigma,
    W as f32 row-major, then (u32 r, f32 scale, W_down, W_up) when present."""
    with open(path, "wb") as fh:
        fh.write(MAGIC_MODEL)
        fh.write(np.asarray([model.n_classes, model.dim], dtype=_HEADER).tobytes())
        fh.write(np.asarray([1 if model.adapter else 0], dtype=np.uint8).tobytes())
        fh.write(np.asarray([model.sigma], dtype=_VALUE).tobytes())
        fh.write(model.weights.astype(_VALUE).tobytes())
        if model.adapter is not None:
            a = model.adapter
            fh.write(np.asarray([a.w_down.shape[0]], dtype=_HEADER).tobytes())
            fh.write(np.asarray([a.scale], dtype=_VALUE).tobytes())
            fh.write(a.w_down.astype(_VALUE).tobytes())
            fh.write(a.w_up.astype(_VALUE).tobytes())


def load_model(path):
    from .errors import FormatError

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC_MODEL:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC_MODEL!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        K, d = (int(v) for v in np.frombuffer(header, dtype=_HEADER))
        flag = fh.read(1)
        sig = fh.read(4)
        if len(flag) != 1 or len(sig) != 4:
            raise FormatError(f"{path}: truncated header")
        has_adapter = bool(flag[0])
        sigma = float(np.frombuffer(sig, dtype=_VALUE)[0])
        w_raw = fh.read(K * d * 4)
        if len(w_raw) != K * d * 4:
            raise FormatError(
                f"{path}: truncated weights: expected {K * d * 4} bytes, got {len(w_raw)}"
            )
        W = np.frombuffer(w_raw, dtype=_VALUE).reshape(K, d).astype(np.float64)
        adapter = None
        if has_adapter:
            head = fh.read(8)
            if len(head) != 8:
                raise FormatError(f"{path}: truncated adapter header")
            r = int(np.frombuffer(head[:4], dtype=_HEADER)[0])
            scale = float(np.frombuffer(head[4:], dtype=_VALUE)[0])
            down_raw = fh.read(r * d * 4)
            up_raw = fh.read(d * r * 4)
            if len(down_raw) != r * d * 4 or len(up_raw) != d * r * 4:
                raise FormatError(f"{path}: truncated adapter payload")
            adapter = FeatureAdapter(
                w_down=np.frombuffer(down_raw, dtype=_VALUE).reshape(r, d).astype(np.float64),
                w_up=np.frombuffer(up_raw, dtype=_VALUE).reshape(d, r).astype(np.float64),
                scale=scale,
            )
        extra = fh.read(1)
    if extra:
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    return CosineModel(W, sigma=sigma, adapter=adapter)
