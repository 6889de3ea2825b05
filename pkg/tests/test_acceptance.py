"""Acceptance suite: one test per gate criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report lines and timings.
"""

import math
import time

import numpy as np
import pytest

from conftest import make_blobs, random_instance, singleton_candidates
from pllkit.classifier import TrainConfig, fit
from pllkit.data import LabelSpace, PLLDataset
from pllkit.generate import gen_fps, longtail_counts, subsample_longtail_indices
from pllkit.metrics import shot_accuracy
from pllkit.objectives import (
    crd_loss_from_logits,
    log_softmax,
    loss_abs_gce,
    loss_abs_mae,
    loss_cavl,
    loss_cc,
    loss_lws,
    loss_weighted_ce,
    lws_weights,
    parse_objective,
    records_adjust,
    sinkhorn_assign,
    softmax,
)
from pllkit.zeroshot import filter_topk, top_k_indices


def report(name, detail, elapsed, limit):
    print(f"[ACCEPTANCE] {name}: PASS ({detail}; {elapsed:.2f}s < {limit}s)")
    assert elapsed < limit, f"{name} exceeded its {limit}s budget: {elapsed:.2f}s"


def singleton_instances(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        B = int(rng.integers(1, 5))
        K = int(rng.integers(2, 7))
        z = rng.normal(0.0, 2.0, (B, K))
        y = rng.integers(0, K, B)
        S = np.zeros((B, K), dtype=bool)
        S[np.arange(B), y] = True
        yield z, S, y


def test_singleton_reduction_suite():
    """Every objective collapses to its supervised form on singleton sets.

    CC, weighted-CE/PRODEN, CAVL, SoLar, RECORDS:CC (neutral tau=0), and
    POP:CC (before any purification) equal plain cross-entropy within 1e-6.
    LWS, ABS-MAE, ABS-GCE, and CRD cannot equal cross-entropy for any inputs
    (their formulas are sigmoid-, linear-, power-, and exclusion-shaped), so
    they are checked against independently coded supervised specializations
    at the same 1e-6 tolerance.
    """
    t0 = time.perf_counter()
    worst_ce = worst_formula = 0.0
    for z, S, y in singleton_instances(100, seed=77):
        B, K = z.shape
        rows = np.arange(B)
        ce = float(np.mean(-log_softmax(z)[rows, y]))
        p = softmax(z)

        # tier 1: plain cross-entropy within 1e-6
        for value in (
            loss_cc(z, S)[0],
            loss_weighted_ce(z, S / S.sum(axis=1, keepdims=True))[0],
            loss_cavl(z, S)[0],
            loss_weighted_ce(z, _solar_targets(p, S))[0],
            loss_cc(records_adjust(z, np.full(K, 1.0 / K), 0.0), S)[0],  # records, tau=0
            loss_cc(z, S.copy())[0],  # pop before the first purification
        ):
            worst_ce = max(worst_ce, abs(value - ce))

        # tier 2: the objective's own supervised specialization
        psi = lambda x: 1.0 / (1.0 + math.exp(x))
        lws_oracle = 0.0
        w = lws_weights(p, S)
        for i in range(B):
            lws_oracle += psi(z[i, y[i]])
            comp = [j for j in range(K) if j != y[i]]
            lws_oracle += sum(w[i, j] * psi(-z[i, j]) for j in comp)
        lws_oracle /= B
        worst_formula = max(worst_formula, abs(loss_lws(z, S, beta=1.0)[0] - lws_oracle))

        mae_oracle = float(np.mean(2.0 * (1.0 - p[rows, y])))
        worst_formula = max(worst_formula, abs(loss_abs_mae(z, S)[0] - mae_oracle))

        q = 0.7
        gce_oracle = float(np.mean((1.0 - p[rows, y] ** q) / q))
        worst_formula = max(worst_formula, abs(loss_abs_gce(z, S, q=q)[0] - gce_oracle))

        crd_oracle = float(
            np.mean([sum(-math.log(1.0 - p[i, j]) for j in range(K) if j != y[i])
                     for i in range(B)])
        )
        worst_formula = max(
            worst_formula, abs(crd_loss_from_logits(z, z, S, lam=0.0)[0] - crd_oracle)
        )

    assert worst_ce < 1e-6, f"cross-entropy deviation {worst_ce:.2e}"
    assert worst_formula < 1e-6, f"supervised-form deviation {worst_formula:.2e}"
    report(
        "singleton-reduction",
        f"CE tier dev {worst_ce:.1e}, supervised-form tier dev {worst_formula:.1e} "
        "over 100 instances",
        time.perf_counter() - t0,
        1.0,
    )


def _solar_targets(p, S):
    import warnings

    with warnings.catch_warnings():
        # tiny singleton batches rarely support every class of the uniform prior
        warnings.simplefilter("ignore")
        Q = sinkhorn_assign(p, S, np.full(S.shape[1], 1.0 / S.shape[1]),
                            eps=0.5, iters=100, warn_on_cap=False)
    return Q / Q.sum(axis=1, keepdims=True)


def _fd(fn, z, h=1e-4):
    num = np.zeros_like(z)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            zp = z.copy()
            zp[i, j] += h
            zm = z.copy()
            zm[i, j] -= h
            num[i, j] = (fn(zp) - fn(zm)) / (2 * h)
    return num


def test_gradient_suite():
    """Analytic logit gradients match central finite differences (rel < 1e-4)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {}

    def check(name, pair_fn, z):
        _, grad = pair_fn(z)
        num = _fd(lambda zz: pair_fn(zz)[0], z)
        rel = np.abs(grad - num).max() / max(np.abs(num).max(), 1e-8)
        worst[name] = max(worst.get(name, 0.0), rel)

    trials = 0
    while trials < 20:
        z, S = random_instance(rng)
        B, K = z.shape
        w_ce = rng.dirichlet(np.ones(K), size=B)
        w_lws = lws_weights(softmax(rng.normal(size=(B, K))), S)
        zb = rng.normal(0.0, 2.0, (B, K))

        check("cc", lambda zz: loss_cc(zz, S), z)
        check("weighted_ce", lambda zz: loss_weighted_ce(zz, w_ce), z)
        check("lws", lambda zz: loss_lws(zz, S, beta=1.3, weights=w_lws), z)
        check("abs_mae", lambda zz: loss_abs_mae(zz, S), z)
        check("abs_gce", lambda zz: loss_abs_gce(zz, S, q=0.7), z)
        check("crd_view_a", lambda zz: crd_loss_from_logits(zz, zb, S, lam=1.0)[:2], z)
        check(
            "crd_view_b",
            lambda zz: (
                crd_loss_from_logits(zb, zz, S, lam=1.0)[0],
                crd_loss_from_logits(zb, zz, S, lam=1.0)[2],
            ),
            z,
        )
        # cavl is piecewise smooth; keep instances away from argmax ties
        masked = np.where(S, z, -np.inf)
        top2 = np.sort(masked, axis=1)[:, -2:]
        gaps = top2[:, 1] - np.where(np.isfinite(top2[:, 0]), top2[:, 0], top2[:, 1] - 1)
        if gaps.min() > 1e-2:
            check("cavl", lambda zz: loss_cavl(zz, S), z)
        trials += 1

    bad = {k: v for k, v in worst.items() if v >= 1e-4}
    assert not bad, f"gradient mismatches: {bad}"
    detail = ", ".join(f"{k}={v:.1e}" for k, v in sorted(worst.items()))
    report("gradient-suite", detail, time.perf_counter() - t0, 10.0)


def test_fps_size_statistics():
    """Mean candidate-set sizes reproduce the generation statistics."""
    t0 = time.perf_counter()
    y10 = np.random.default_rng(1).integers(0, 10, 50_000)
    mean10 = gen_fps(y10, 10, 0.7, seed=2).sum(axis=1).mean()
    assert 7.25 <= mean10 <= 7.35, f"K=10 eta=0.7 mean {mean10:.4f}"

    y100 = np.random.default_rng(1).integers(0, 100, 50_000)
    mean100 = gen_fps(y100, 100, 0.1, seed=2).sum(axis=1).mean()
    assert 10.8 <= mean100 <= 11.0, f"K=100 eta=0.1 mean {mean100:.4f}"
    report(
        "fps-size-statistic",
        f"K=10 eta=0.7 mean {mean10:.3f}; K=100 eta=0.1 mean {mean100:.3f}",
        time.perf_counter() - t0,
        5.0,
    )


def test_longtail_profile():
    """Per-class keep counts equal the floor profile, re-derived brute force."""
    t0 = time.perf_counter()
    brute = [math.floor(5000 * 100 ** (-j / 9)) for j in range(10)]
    counts = [int(c) for c in longtail_counts(5000, 10, 100.0)]
    assert counts == brute
    assert counts[0] == 5000 and counts[-1] == 50

    y = np.repeat(np.arange(10), 5000)
    idx = subsample_longtail_indices(y, 10, 100.0, seed=0)
    kept = list(np.bincount(y[idx], minlength=10))
    assert kept == brute
    report("longtail-profile", f"counts {counts}", time.perf_counter() - t0, 1.0)


def test_filtering_invariants():
    """Subset, non-emptiness, size cap, idempotence, coverage preservation."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    total = 0
    for K in (6, 10, 17):
        n = 3_400 if K != 17 else 3_200
        total += n
        conf = rng.dirichlet(np.ones(K), size=n)
        S = np.zeros((n, K), dtype=bool)
        for i in range(n):
            S[i, rng.choice(K, rng.integers(1, K + 1), replace=False)] = True
        y = np.array([rng.choice(np.flatnonzero(row)) for row in S])
        k = K // 2

        out = filter_topk(S, conf, k)
        assert not (out & ~S).any(), "output not a subset"
        assert out.any(axis=1).all(), "empty output row"
        assert out.sum(axis=1).max() <= k, "size cap violated"
        assert np.array_equal(filter_topk(out, conf, k), out), "not idempotent"

        in_top = np.zeros_like(S)
        np.put_along_axis(in_top, top_k_indices(conf, k), True, axis=1)
        rows = np.arange(n)
        preserved = out[rows, y][in_top[rows, y]]
        assert preserved.all(), "coverage broken for top-ranked oracle labels"
    report(
        "filtering-invariants",
        f"{total} random (S, z) pairs across K in (6, 10, 17)",
        time.perf_counter() - t0,
        5.0,
    )


def test_sinkhorn_marginals():
    """Feasible random 8x5 instances reach both marginals within 1e-3."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    converged = 0
    for _ in range(200):
        B, K = 8, 5
        S = np.zeros((B, K), dtype=bool)
        for i in range(B):
            S[i, rng.choice(K, rng.integers(1, K + 1), replace=False)] = True
        witness = np.where(S, rng.random((B, K)), 0.0)
        witness = witness / witness.sum(axis=1, keepdims=True) / B
        r = witness.sum(axis=0)
        p = rng.dirichlet(np.ones(K), size=B)

        Q = sinkhorn_assign(p, S, r, eps=0.5, iters=100, warn_on_cap=False)
        assert np.all(Q[~S] == 0.0), "mass off the candidate support"
        assert (Q >= 0).all()
        row_res = np.abs(Q.sum(axis=1) - 1.0 / B).max()
        col_res = np.abs(Q.sum(axis=0) - r).max()
        converged += max(row_res, col_res) < 1e-3
    assert converged >= 190, f"only {converged}/200 inside tolerance"
    report(
        "sinkhorn-marginals",
        f"{converged}/200 trials converged, zero off-support everywhere",
        time.perf_counter() - t0,
        5.0,
    )


def _blob_world():
    X, y, means = make_blobs(500, 10, 64, seed=1, sep=4.0)
    Xe, ye, _ = make_blobs(200, 10, 64, seed=1001, sep=4.0)
    tinit = means / np.linalg.norm(means, axis=1, keepdims=True)
    return X, y, Xe, ye, tinit


def test_synthetic_end_to_end():
    """PLL objectives stay within 5% of the supervised oracle on easy blobs.

    d=64, K=10, N=5000, pairwise class-mean separation 4 sigma, FPS eta=0.5,
    10 epochs. All runs (including the supervised oracle) share the same
    config: lr=0.02, batch 64, init from the normalized class directions,
    which is the pipeline's standard warm start.
    """
    t0 = time.perf_counter()
    X, y, Xe, ye, tinit = _blob_world()
    space = LabelSpace(10)

    def run(objective, S):
        ds = PLLDataset(features=X, candidates=S, space=space, oracle_labels=y)
        cfg = TrainConfig(objective=objective, epochs=10, lr=0.02, batch_size=64,
                          seed=0, text_init=tinit)
        _, _, rep = fit(ds, cfg=cfg, eval_features=Xe, eval_labels=ye)
        return rep.epochs[-1].test_acc

    supervised = run("cc", singleton_candidates(y, 10))
    S = gen_fps(y, 10, 0.5, seed=7)
    ratios = {}
    for name in ("cc", "proden", "cavl", "abs_gce"):
        ratios[name] = run(name, S) / supervised
    bad = {k: round(v, 4) for k, v in ratios.items() if v < 0.95}
    assert not bad, f"objectives below 0.95x supervised ({supervised:.3f}): {bad}"
    detail = f"supervised {supervised:.3f}; " + ", ".join(
        f"{k} ratio {v:.3f}" for k, v in ratios.items()
    )
    report("synthetic-end-to-end", detail, time.perf_counter() - t0, 60.0)


def test_longtail_records_debiasing():
    """Class-prior debiasing lifts few-shot accuracy over plain CC.

    gamma=50 subsample of the same blobs, FPS eta=0.3, sign test over 5 seeds
    on the few-bucket accuracy difference (RECORDS:CC minus CC).
    """
    t0 = time.perf_counter()
    X, y, Xe, ye, _ = _blob_world()
    diffs = []
    for seed in range(5):
        idx = subsample_longtail_indices(y, 10, 50.0, seed=seed)
        Xlt, ylt = X[idx], y[idx]
        counts = np.bincount(ylt, minlength=10)
        S = gen_fps(ylt, 10, 0.3, seed=100 + seed)
        ds = PLLDataset(features=Xlt, candidates=S, space=LabelSpace(10),
                        oracle_labels=ylt)
        few = {}
        for name in ("cc", "records:cc"):
            cfg = TrainConfig(objective=parse_objective(name), epochs=20, lr=0.1,
                              batch_size=64, seed=seed)
            model, _, _ = fit(ds, cfg=cfg)
            _, _, few[name] = shot_accuracy(model.predict(Xe), ye, counts)
        diffs.append(few["records:cc"] - few["cc"])
    wins = sum(1 for d in diffs if d > 0)
    losses = sum(1 for d in diffs if d < 0)
    assert wins > losses, f"sign test failed: diffs {np.round(diffs, 3)}"
    assert float(np.mean(diffs)) > 0, f"mean margin not positive: {np.mean(diffs):+.4f}"
    report(
        "longtail-records-debiasing",
        f"few-bucket margins {[f'{d:+.3f}' for d in diffs]}, "
        f"{wins}/5 seeds improved, mean {np.mean(diffs):+.4f}",
        time.perf_counter() - t0,
        120.0,
    )


def test_pipeline_determinism(tmp_path):
    """Two pipeline runs with the same config and seed are byte-identical."""
    import os

    from test_cli import read_all_outputs, write_fixture
    from pllkit.cli import run as cli_run

    t0 = time.perf_counter()
    config = write_fixture(tmp_path)
    assert cli_run(["pipeline", "--config", str(config)]) == 0
    first = read_all_outputs(tmp_path / "out")
    assert cli_run(["pipeline", "--config", str(config)]) == 0
    second = read_all_outputs(tmp_path / "out")
    assert first.keys() == second.keys()
    diffs = [k for k in first if first[k] != second[k]]
    assert not diffs, f"outputs changed across reruns: {diffs}"
    report(
        "pipeline-determinism",
        f"{len(first)} output files byte-identical across reruns",
        time.perf_counter() - t0,
        60.0,
    )
