"""Optional paper-scale checks gated on real exported embeddings.

These run only when PLL_CIFAR10_DIR points at a directory produced by the
companion extractor (frontend/) from the CIFAR-10 test split with a CLIP
ViT-B/16 checkpoint:

    embed-extract --dataset <cifar10-test> --model Xenova/clip-vit-base-patch16 \
                  --out $PLL_CIFAR10_DIR

Expected files: features.pllf, text.pllf, labels.plly, conf.pllf, and, for
the pre-filter rescue check, train-split exports under $PLL_CIFAR10_DIR/train.
Without the exports both tests skip.
"""

import os

import numpy as np
import pytest

from pllkit import (
    LabelSpace,
    PLLDataset,
    TrainConfig,
    accuracy,
    filter_topk,
    fit,
    gen_fps,
    read_labels_file,
    read_matrix_file,
)

EXPORT_DIR = os.environ.get("PLL_CIFAR10_DIR")

pytestmark = pytest.mark.skipif(
    not EXPORT_DIR or not os.path.isdir(EXPORT_DIR),
    reason="PLL_CIFAR10_DIR with extractor output not available",
)


def _load(split_dir):
    feats = read_matrix_file(os.path.join(split_dir, "features.pllf"))
    labels, k = read_labels_file(os.path.join(split_dir, "labels.plly"))
    return feats, labels, k


def test_zero_shot_anchor():
    """Zero-shot argmax accuracy on the CIFAR-10 test split: 87.2 +- 1.5."""
    conf = read_matrix_file(os.path.join(EXPORT_DIR, "conf.pllf"))
    labels, _ = read_labels_file(os.path.join(EXPORT_DIR, "labels.plly"))
    acc = accuracy(conf.argmax(axis=1), labels)
    print(f"[ACCEPTANCE-SECONDARY] zero-shot-anchor: accuracy {acc:.4f}")
    assert abs(acc - 0.872) <= 0.015


def test_prefilter_rescue():
    """LWS at eta=0.7 collapses unfiltered and recovers with top-5 filtering."""
    train_dir = os.path.join(EXPORT_DIR, "train")
    if not os.path.isdir(train_dir):
        pytest.skip("train-split export not available")
    X, y, k = _load(train_dir)
    Xe, ye, _ = _load(EXPORT_DIR)
    conf = read_matrix_file(os.path.join(train_dir, "conf.pllf"))

    S = gen_fps(y, k, 0.7, seed=0)
    space = LabelSpace(k)
    text = read_matrix_file(os.path.join(EXPORT_DIR, "text.pllf"))

    def run(cands):
        ds = PLLDataset(features=X, candidates=cands, space=space, oracle_labels=y)
        cfg = TrainConfig(objective="lws", epochs=10, seed=0, text_init=text)
        _, _, rep = fit(ds, cfg=cfg, eval_features=Xe, eval_labels=ye)
        return rep.epochs[-1].test_acc

    plain = run(S)
    rescued = run(filter_topk(S, conf, 5))
    print(
        f"[ACCEPTANCE-SECONDARY] prefilter-rescue: unfiltered {plain:.3f}, "
        f"filtered {rescued:.3f}"
    )
    assert plain < 0.30
    assert rescued >= 0.90
