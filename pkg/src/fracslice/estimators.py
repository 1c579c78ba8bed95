"""scikit-learn style wrappers around the density and regime estimators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points
from .groups import Subspace
from .measure import DensityParams, DiscreteMeasure, density_profile, pushforward_project
from .slice import LABELS, Thresholds, classify


class ProjectedDensityEstimator(TransformerMixin, BaseEstimator):
    """Windowed lower/upper densities of a projected atomic measure.

    Parameters
    ----------
    subspace : Subspace, optional
        Atoms are projected onto its orthogonal complement; ``None`` keeps
        the ambient coordinates.
    resolution : float
        Discretization scale of the atoms passed to :meth:`fit`.
    levels, guard, eps0 :
        Scale ladder (see :class:`DensityParams`).

    Examples
    --------
    >>> import numpy as np
    >>> X = (np.arange(1024)[:, None] + 0.5) / 1024
    >>> est = ProjectedDensityEstimator(resolution=1 / 1024).fit(X)
    >>> est.transform([[0.5]]).round(2)
    array([[1., 1.]])
    """

    def __init__(self, subspace=None, resolution=1e-3, levels=6, guard=10.0, eps0=None):
        self.subspace = subspace
        self.resolution = resolution
        self.levels = levels
        self.guard = guard
        self.eps0 = eps0

    def fit(self, X, y=None, sample_weight=None):
        X = check_points(X)
        n = len(X)
        w = np.full(n, 1.0 / n) if sample_weight is None else np.asarray(sample_weight, float)
        w = w / w.sum()
        mu = DiscreteMeasure(X, w, self.resolution)
        if self.subspace is not None:
            if not isinstance(self.subspace, Subspace):
                raise TypeError("subspace must be a Subspace")
            mu = pushforward_project(mu, self.subspace)
        self.measure_ = mu
        self.exponent_ = mu.ambient
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Rows ``(theta_lower_hat, theta_upper_hat)`` at each query point."""
        check_is_fitted(self, "measure_")
        X = check_points(X, self.n_features_in_)
        if self.subspace is not None:
            X = X @ self.subspace.basis_Vperp
        p = DensityParams(self.levels, self.guard, self.eps0)
        out = np.empty((len(X), 2))
        for i, x in enumerate(X):
            prof = density_profile(self.measure_, x, self.exponent_, p.eps0, p.levels, p.guard)
            out[i] = prof.theta_lower_hat, prof.theta_upper_hat
        return out


class RegimeClassifier(ClassifierMixin, BaseEstimator):
    """Threshold classifier mapping F traces (rows of X) to regime labels.

    The rule has no trainable state; :meth:`fit` only records the label set.
    """

    def __init__(self, blowup_factor=10.0, trend_fraction=1 / 3, min_length=30):
        self.blowup_factor = blowup_factor
        self.trend_fraction = trend_fraction
        self.min_length = min_length

    def fit(self, X=None, y=None):
        self.classes_ = np.array(LABELS)
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        th = Thresholds(self.blowup_factor, self.trend_fraction, self.min_length)
        return np.array([classify(row, th) for row in X])
