"""scikit-learn compatible wrappers.

Each row of ``X`` is one sample of cell counts (shape ``(n_samples, m)``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import EmptyPooledCell
from .parametric import family_by_name, mle_fit
from .statistics import STAT_FUNCS, StatisticValue, canonical_name, null_table, p_value
from .transforms import (
    AnchorPair,
    DiscreteModel,
    SampleCounts,
    _residuals,
    components_y_hat,
    parametric_bundle,
    rotate_onto,
    transform_parametric,
    unrotate,
)


def check_count_matrix(X) -> np.ndarray:
    """Validate a 2-D array of nonnegative integer counts with positive row totals."""
    X = check_array(X, dtype=np.float64)
    if np.any(X < 0) or np.any(X != np.round(X)):
        raise ValueError("counts must be nonnegative integers")
    if X.shape[1] < 2:
        raise ValueError(f"need at least 2 cells, got {X.shape[1]}")
    if np.any(X.sum(axis=1) <= 0):
        raise ValueError("every sample needs a positive total count")
    return X


def _pooled_model(X):
    totals = X.sum(axis=0)
    if np.any(totals == 0):
        raise EmptyPooledCell(f"cells {(np.flatnonzero(totals == 0) + 1).tolist()} are empty in every sample")
    return DiscreteModel(totals / totals.sum())


class ChiSquareRotation(TransformerMixin, BaseEstimator):
    """Rotate chi-square components of count vectors onto a fixed anchor.

    Parameters
    ----------
    probs : array_like of shape (m,), optional
        Hypothesized cell probabilities. When omitted, ``fit`` uses the
        pooled proportions of the training counts.
    anchor : {"diagonal", "e1"}
        Direction the model's ``sqrt(p)`` is rotated onto.

    Attributes
    ----------
    model_ : DiscreteModel
    anchor_ : AnchorPair
    n_features_in_ : int
    """

    def __init__(self, probs=None, anchor="diagonal"):
        self.probs = probs
        self.anchor = anchor

    def fit(self, X, y=None):
        X = check_count_matrix(X)
        self.model_ = _pooled_model(X) if self.probs is None else DiscreteModel(self.probs)
        if self.model_.m != X.shape[1]:
            raise ValueError(f"model has {self.model_.m} cells, X has {X.shape[1]} columns")
        self.anchor_ = AnchorPair.preset_for(self.anchor, self.model_.m)
        if self.anchor_.rhat is not None:
            raise ValueError(f"anchor {self.anchor!r} is for estimated parameters")
        self.n_features_in_ = X.shape[1]
        return self

    def components(self, X):
        """Raw components ``(nu - n p) / sqrt(n p)`` for each row."""
        check_is_fitted(self)
        X = check_count_matrix(X)
        return _residuals(X, self.model_.probs)

    def transform(self, X):
        y = self.components(X)
        return rotate_onto(y, self.model_.sqrt, self.anchor_.r, zero_first=self.anchor == "e1")

    def inverse_transform(self, Z):
        """Raw components from rotated ones (the counts themselves are not recovered)."""
        check_is_fitted(self)
        Z = check_array(Z, dtype=np.float64)
        return unrotate(Z, self.model_.sqrt, self.anchor_.r)


class ParametricChiSquareRotation(TransformerMixin, BaseEstimator):
    """Refit a one-parameter family to every row and rotate its components.

    ``transform`` returns the rotated components; ``estimate`` returns the
    per-row maximum-likelihood parameters.
    """

    def __init__(self, family="power_law", anchor="plateau", basis="gram_schmidt", tol=1e-10):
        self.family = family
        self.anchor = anchor
        self.basis = basis
        self.tol = tol

    def fit(self, X, y=None):
        X = check_count_matrix(X)
        m = X.shape[1]
        self.family_ = family_by_name(self.family, m) if isinstance(self.family, str) else self.family
        self.anchor_ = AnchorPair.preset_for(self.anchor, m).with_score_anchor()
        self.n_features_in_ = m
        return self

    def estimate(self, X):
        check_is_fitted(self)
        X = check_count_matrix(X)
        return np.array([mle_fit(row, self.family_, tol=self.tol).theta for row in X])

    def transform(self, X):
        check_is_fitted(self)
        X = check_count_matrix(X)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            sample = SampleCounts(row.astype(np.int64))
            theta = mle_fit(sample, self.family_, tol=self.tol).theta
            yhat = components_y_hat(sample, self.family_, theta)
            bundle = parametric_bundle(self.family_, theta, self.anchor_, self.basis)
            out[i] = transform_parametric(yhat, bundle, self.anchor_.preset).values
        return out


class DistributionFreeTest(BaseEstimator):
    """Monte Carlo goodness-of-fit test on rotated components.

    ``fit`` builds the null table (which depends only on ``m``, the anchor,
    ``n_reps`` and ``random_state`` for the rotated statistics); ``p_values``
    then scores any number of samples.
    """

    def __init__(self, statistic="ks_z", probs=None, anchor="diagonal", n_reps=10_000, random_state=0):
        self.statistic = statistic
        self.probs = probs
        self.anchor = anchor
        self.n_reps = n_reps
        self.random_state = random_state

    def fit(self, X, y=None):
        self.rotation_ = ChiSquareRotation(self.probs, self.anchor).fit(X)
        self.statistic_ = canonical_name(self.statistic)
        model = self.rotation_.model_
        self.table_ = null_table(
            self.statistic_,
            model.m,
            self.rotation_.anchor_,
            B=self.n_reps,
            seed=int(self.random_state),
            model=model if self.statistic_.endswith("_y") else None,
        )
        self.n_features_in_ = model.m
        return self

    def statistics(self, X):
        check_is_fitted(self)
        comp = self.rotation_.components(X) if self.statistic_.endswith("_y") else self.rotation_.transform(X)
        return STAT_FUNCS[self.statistic_](comp)

    def p_values(self, X):
        table = self.table_
        model = self.rotation_.model_
        anchor = self.rotation_.anchor_
        out = []
        for value in self.statistics(X):
            observed = StatisticValue(
                self.statistic_, float(value), model.m,
                anchor=anchor.preset, anchor_hash=anchor.hash, model_hash=model.hash,
            )
            out.append(p_value(observed, table))
        return np.array(out)
