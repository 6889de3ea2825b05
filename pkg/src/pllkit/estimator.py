"""scikit-learn estimator wrapper around the cosine-classifier trainer."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .classifier import TrainConfig, fit
from .data import LabelSpace, PLLDataset
from .validation import check_candidates, check_features


class PartialLabelCosineClassifier(BaseEstimator, ClassifierMixin):
    """Cosine-similarity classifier trained from candidate label sets.

    Follows the scikit-learn estimator contract: all constructor arguments are
    hyperparameters (so get_params/set_params/clone work), fit returns self,
    and predict/predict_proba/decision_function operate on feature rows.

    Parameters
    ----------
    objective : str, default "cc"
        Objective name, e.g. "cc", "proden", "lws", "cavl", "abs_mae",
        "abs_gce", "crd", "solar", or a wrapped form like "records:cc" and
        "pop:proden".
    objective_params : dict or None
        Extra knobs forwarded to the objective (beta, q, lam, noise_sigma,
        m, tau, sinkhorn_eps, sinkhorn_iters, dist_momentum, purge_rate).
    n_classes : int or None
        Required when fitting from 1-D labels; inferred from a 2-D candidate
        matrix otherwise.
    text_init : array of shape (n_classes, dim) or None
        Class text embeddings used to initialize the classifier directions.

    The remaining parameters mirror TrainConfig.
    """

    def __init__(self, objective="cc", objective_params=None, n_classes=None,
                 lr=0.01, momentum=0.9, weight_decay=5e-4, batch_size=64,
                 epochs=10, sigma=25.0, use_adapter=False, adapter_dim=None,
                 adapter_scale=1.0, text_init=None, protect_init=False, seed=0):
        self.objective = objective
        self.objective_params = objective_params
        self.n_classes = n_classes
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.sigma = sigma
        self.use_adapter = use_adapter
        self.adapter_dim = adapter_dim
        self.adapter_scale = adapter_scale
        self.text_init = text_init
        self.protect_init = protect_init
        self.seed = seed

    def _candidates_from_y(self, y, n_samples):
        y = np.asarray(y)
        if y.ndim == 2:
            return check_candidates(y, n_samples=n_samples)
        y = y.ravel().astype(np.int64)
        K = self.n_classes or int(y.max()) + 1
        S = np.zeros((n_samples, K), dtype=bool)
        S[np.arange(n_samples), y] = True
        return S

    def fit(self, X, y):
        """Fit from features and either candidate rows (2-D 0/1) or plain labels."""
        X = check_features(X)
        S = self._candidates_from_y(y, X.shape[0])
        from .objectives import parse_objective

        objective = parse_objective(self.objective, **(self.objective_params or {}))
        cfg = TrainConfig(
            lr=self.lr, momentum=self.momentum, weight_decay=self.weight_decay,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            objective=objective, sigma=self.sigma, use_adapter=self.use_adapter,
            adapter_dim=self.adapter_dim, adapter_scale=self.adapter_scale,
            text_init=self.text_init, protect_init=self.protect_init,
        )
        ds = PLLDataset(features=X, candidates=S, space=LabelSpace(S.shape[1]))
        self.model_, self.state_, self.report_ = fit(ds, cfg=cfg)
        self.classes_ = np.arange(S.shape[1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predicting")

    def decision_function(self, X):
        self._check_fitted()
        return self.model_.logits(check_features(X))

    def predict_proba(self, X):
        self._check_fitted()
        return self.model_.predict_proba(check_features(X))

    def predict(self, X):
        self._check_fitted()
        return self.model_.predict(check_features(X))
