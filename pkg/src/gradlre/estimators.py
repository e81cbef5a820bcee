"""scikit-learn wrappers.

``RelationEncoder`` turns ``RelationMention`` objects into hashed feature rows;
``GradLREClassifier`` is a semi-supervised classifier over such rows where
``y == -1`` marks an unlabeled sample (the ``sklearn.semi_supervised``
convention).  Chained they form an ordinary pipeline::

    make_pipeline(RelationEncoder(), GradLREClassifier()).fit(mentions, y)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import RelationMention, mark_entities
from .girl import GirlConfig, fit_arrays
from .model import EncoderConfig, SGDConfig, encode_all, forward, init_params, pretrain

UNLABELED = -1
ESTIMATOR_MODES = ("gradlre", "self-train", "supervised")


class RelationEncoder(TransformerMixin, BaseEstimator):
    """Stateless hashed entity-context encoder; output width is ``2 * h_R``."""

    def __init__(self, h_R=256, context_window=3, hash_seed=0):
        self.h_R = h_R
        self.context_window = context_window
        self.hash_seed = hash_seed

    def _config(self) -> EncoderConfig:
        return EncoderConfig(self.h_R, self.context_window, self.hash_seed)

    def fit(self, X, y=None):
        self._config()
        self.n_features_out_ = 2 * self.h_R
        return self

    def transform(self, X):
        mentions = list(X)
        for i, m in enumerate(mentions):
            if not isinstance(m, RelationMention):
                raise TypeError(f"sample {i} is {type(m).__name__}, expected RelationMention")
        cfg = self._config()
        if not mentions:
            return np.zeros((0, cfg.dim))
        return encode_all([mark_entities(m) for m in mentions], cfg)


class GradLREClassifier(ClassifierMixin, BaseEstimator):
    """Softmax relation classifier trained by gradient imitation on unlabeled rows.

    ``mode="self-train"`` keeps every pseudo-label instead; ``mode="supervised"``
    ignores the unlabeled rows.  After ``fit`` the episode log is in ``run_log_``.
    """

    def __init__(self, lam=0.5, episode_len=16, segments=10, rl_step_size=0.01,
                 gl_recompute="per-episode", loss_scope="all", step_size=0.1, epochs=400,
                 batch_size=16, hidden_dim=0, mode="gradlre", random_state=0):
        self.lam = lam
        self.episode_len = episode_len
        self.segments = segments
        self.rl_step_size = rl_step_size
        self.gl_recompute = gl_recompute
        self.loss_scope = loss_scope
        self.step_size = step_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.hidden_dim = hidden_dim
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.mode not in ESTIMATOR_MODES:
            raise ValueError(f"mode must be one of {ESTIMATOR_MODES}, got {self.mode!r}")
        seed = int(self.random_state or 0)
        cfg = GirlConfig(self.lam, self.episode_len, self.segments, self.rl_step_size,
                         self.gl_recompute, self.loss_scope, seed)
        sgd = SGDConfig(self.step_size, self.epochs, self.batch_size, seed)
        lab = y != UNLABELED
        if not lab.any():
            raise ValueError("at least one labeled sample (y != -1) is required")
        self.classes_, y_idx = np.unique(y[lab], return_inverse=True)
        self.n_features_in_ = X.shape[1]
        if self.mode == "supervised":
            params = init_params(len(self.classes_), X.shape[1], self.hidden_dim, seed=seed)
            self.params_ = pretrain(params, X[lab], y_idx, sgd)
            self.run_log_ = None
        else:
            self.params_, self.run_log_ = fit_arrays(
                X[lab], y_idx, X[~lab], len(self.classes_), cfg, sgd, self.hidden_dim, self.mode)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return forward(self.params_, X)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
