"""scikit-learn style wrapper around the localisation experiment."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .experiments import (
    DEFAULT_CERT_THRESHOLD,
    DEFAULT_MAX_STEPS,
    DEFAULT_WINDOW,
    Verdict,
    VerdictKind,
    run_trajectory,
)
from .landscape import classify
from .model import Params, RngStream


def verdict_label(verdict: Verdict) -> str:
    if verdict.kind in (VerdictKind.SINGLE_SITE, VerdictKind.PAIR):
        return f"{verdict.kind.value}:{verdict.site}"
    return verdict.kind.value


class LocalizationEstimator(BaseEstimator):
    """Predict where growth localises from each row of initial counts.

    ``fit`` only validates the parameters and classifies the landscape;
    ``predict`` simulates one trajectory per row of ``X`` on stream
    ``(random_state, row)`` and returns labels such as ``"SingleSite:2"``
    or ``"Pair:1"``.
    """

    def __init__(self, lambdas=None, steps=DEFAULT_MAX_STEPS, window=DEFAULT_WINDOW,
                 cert_threshold=DEFAULT_CERT_THRESHOLD, stop_on_detect=True, random_state=0):
        self.lambdas = lambdas
        self.steps = steps
        self.window = window
        self.cert_threshold = cert_threshold
        self.stop_on_detect = stop_on_detect
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.lambdas is None:
            raise ValueError("lambdas must be set before fit")
        self.params_ = Params(self.lambdas)
        self.landscape_ = classify(self.params_)
        self.n_features_in_ = self.params_.n_sites
        if X is not None:
            self._validate_rows(X)
        return self

    def _validate_rows(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.int64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        if (X < 0).any():
            raise ValueError("initial counts must be non-negative")
        return X

    def predict_verdicts(self, X) -> list[Verdict]:
        check_is_fitted(self, ["params_", "landscape_"])
        X = self._validate_rows(X)
        return [
            run_trajectory(self.params_, row, self.steps, RngStream(self.random_state, i),
                           self.window, self.cert_threshold, self.stop_on_detect)[0]
            for i, row in enumerate(X)
        ]

    def predict(self, X) -> np.ndarray:
        return np.array([verdict_label(v) for v in self.predict_verdicts(X)], dtype=object)
