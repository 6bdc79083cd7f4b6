"""scikit-learn style wrappers around the functional API.

Each estimator keeps its configuration in ``__init__`` (so ``get_params`` and
``clone`` work) and stores fitted state in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dyadic import DyadicSystem
from .estimates import cz_decompose, fit_gaussian
from .maximal import m_hl_q
from .space import MetricMeasureSpace, doubling_constant, scan_radii, volumes
from .spectral import Multiplier, apply_multiplier, spectral_decompose

__all__ = [
    "DoublingProfiler",
    "HardyLittlewoodMaximal",
    "SpectralMultiplier",
    "GaussianEstimateFitter",
    "CalderonZygmund",
]


def _space(X, sample_weight=None) -> MetricMeasureSpace:
    if isinstance(X, MetricMeasureSpace):
        return X
    X = np.asarray(X, dtype=float)
    mu = np.ones(X.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    return MetricMeasureSpace(X, mu)


class DoublingProfiler(BaseEstimator, TransformerMixin):
    """Fit the doubling profile of a distance matrix; ``transform`` returns ball volumes.

    ``fit(X, sample_weight=mu)`` takes an ``n x n`` distance matrix (or a
    :class:`MetricMeasureSpace`).
    """

    def __init__(self, radii=None):
        self.radii = radii

    def fit(self, X, y=None, sample_weight=None):
        self.space_ = _space(X, sample_weight)
        self.profile_ = doubling_constant(self.space_)
        self.C_D_ = self.profile_.C_D
        self.d_ = self.profile_.d
        self.n_features_in_ = self.space_.n
        return self

    def transform(self, X=None):
        check_is_fitted(self, "profile_")
        radii = scan_radii(self.space_) if self.radii is None else np.asarray(self.radii, dtype=float)
        return volumes(self.space_, radii)


class HardyLittlewoodMaximal(BaseEstimator, TransformerMixin):
    """``transform(f) = M^q_HL f`` on the space given at construction."""

    def __init__(self, space: MetricMeasureSpace | None = None, q: float = 1.0):
        self.space = space
        self.q = q

    def fit(self, X=None, y=None):
        if self.space is None:
            raise ValueError("space is required")
        self.n_features_in_ = self.space.n
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return m_hl_q(self.space, self.q, X)


class SpectralMultiplier(BaseEstimator, TransformerMixin):
    """``transform(field) = f(A) field`` for a generator matrix on ``space``.

    ``multiplier`` is a :class:`Multiplier`, a callable or a spec accepted by
    :meth:`Multiplier.from_spec`.
    """

    def __init__(self, space: MetricMeasureSpace | None = None, multiplier="identity"):
        self.space = space
        self.multiplier = multiplier

    def fit(self, X, y=None):
        if self.space is None:
            raise ValueError("space is required")
        self.operator_ = spectral_decompose(X, self.space)
        m = self.multiplier
        self.multiplier_ = m if callable(m) else Multiplier.from_spec(m)
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        return apply_multiplier(self.multiplier_, self.operator_, X)


class GaussianEstimateFitter(BaseEstimator):
    """Fit Gaussian heat-kernel constants ``(C, c)`` for a generator matrix."""

    def __init__(self, space: MetricMeasureSpace | None = None, m: float = 2.0, t_grid=None, c_grid=None,
                 C_max: float = 1e6):
        self.space = space
        self.m = m
        self.t_grid = t_grid
        self.c_grid = c_grid
        self.C_max = C_max

    def fit(self, X, y=None):
        if self.space is None:
            raise ValueError("space is required")
        self.operator_ = spectral_decompose(X, self.space)
        self.fit_ = fit_gaussian(self.operator_, self.m, self.t_grid, self.c_grid, C_max=self.C_max)
        self.C_, self.c_ = self.fit_.C, self.fit_.c
        return self

    def score(self, X=None, y=None) -> float:
        """Negative log-residual margin; ``>= 0`` for a passing fit."""
        check_is_fitted(self, "fit_")
        return -self.fit_.residual


class CalderonZygmund(BaseEstimator, TransformerMixin):
    """``transform(f)`` returns the good part of the decomposition at ``height``."""

    def __init__(self, system: DyadicSystem | None = None, height: float = 1.0):
        self.system = system
        self.height = height

    def fit(self, X=None, y=None):
        if self.system is None:
            raise ValueError("system is required")
        self.n_features_in_ = self.system.space.n
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        self.decomposition_ = cz_decompose(self.system.space, self.system, np.asarray(X), self.height)
        return self.decomposition_.g
