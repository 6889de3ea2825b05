import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import make_blobs, singleton_candidates
from pllkit.estimator import PartialLabelCosineClassifier
from pllkit.generate import gen_fps


class TestEstimatorApi:
    def test_get_set_params_round_trip(self):
        est = PartialLabelCosineClassifier(objective="lws", lr=0.05)
        params = est.get_params()
        assert params["objective"] == "lws"
        est2 = PartialLabelCosineClassifier().set_params(**params)
        assert est2.lr == 0.05

    def test_clone(self):
        est = PartialLabelCosineClassifier(objective="records:cc",
                                           objective_params={"tau":  2.0})
        cloned = clone(est)
        assert cloned.objective == "records:cc"
        assert cloned.objective_params == {"tau": 2.0}

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            PartialLabelCosineClassifier().predict(np.zeros((2, 3)))

    def test_fit_predict_candidate_matrix(self):
        X, y, means = make_blobs(60, 4, 8, seed=0, sep=8.0)
        S = gen_fps(y, 4, 0.3, seed=1)
        tinit = means / np.linalg.norm(means, axis=1, keepdims=True)
        est = PartialLabelCosineClassifier(objective="cc", epochs=8, lr=0.05,
                                           text_init=tinit, seed=0)
        est.fit(X, S)
        assert est.predict(X).shape == (y.size,)
        assert est.score(X, y) > 0.9
        proba = est.predict_proba(X)
        assert np.allclose(proba.sum(axis=1), 1.0)
        assert est.decision_function(X).shape == (y.size, 4)

    def test_fit_plain_labels_is_supervised(self):
        X, y, _ = make_blobs(60, 4, 8, seed=2, sep=8.0)
        est = PartialLabelCosineClassifier(objective="cc", epochs=8, lr=0.05,
                                           n_classes=4, seed=0)
        est.fit(X, y)
        assert est.score(X, y) > 0.95
        assert list(est.classes_) == [0, 1, 2, 3]

    def test_plain_labels_match_singleton_matrix(self):
        X, y, _ = make_blobs(40, 3, 6, seed=3, sep=8.0)
        a = PartialLabelCosineClassifier(epochs=3, n_classes=3, seed=5).fit(X, y)
        b = PartialLabelCosineClassifier(epochs=3, seed=5).fit(
            X, singleton_candidates(y, 3)
        )
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_deterministic_across_fits(self):
        X, y, _ = make_blobs(40, 3, 6, seed=4)
        S = gen_fps(y, 3, 0.4, seed=2)
        preds = [
            PartialLabelCosineClassifier(objective="proden", epochs=4, seed=9)
            .fit(X, S)
            .predict(X)
            for _ in range(2)
        ]
        assert np.array_equal(preds[0], preds[1])
