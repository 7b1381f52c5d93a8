"""scikit-learn style estimators over the critical and trivialize modules.

``fit`` takes the polynomial map (a PolyMap or a list of Polynomial), so the
estimators compose with ``get_params``/``set_params``/``clone``; ``predict``
and ``decision_function`` take an array of target values of shape (k, m).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .algebra import Polynomial, PolyMap
from .critical import Schedule, k_infinity_estimate, sigma_components
from .errors import InputError
from .strata import Box, Stratification
from .trivialize import fiber_components, trivialize_box


def _as_map(F) -> PolyMap:
    if isinstance(F, PolyMap):
        return F
    if isinstance(F, Polynomial):
        return PolyMap([F])
    try:
        return PolyMap(list(F))
    except TypeError:
        raise InputError("expected a PolyMap or a sequence of Polynomial") from None


class _ValueSetEstimator(BaseEstimator):
    """Shared predict/decision_function for estimators producing a value set."""

    def _values(self, T) -> np.ndarray:
        check_is_fitted(self, "value_set_")
        T = np.asarray(T, dtype=float)
        if T.ndim == 1 and self.value_set_.dim == 1:
            T = T.reshape(-1, 1)
        T = check_array(T, ensure_2d=True)
        if T.shape[1] != self.value_set_.dim:
            raise InputError(f"values have {T.shape[1]} columns, expected {self.value_set_.dim}")
        return T

    def decision_function(self, T) -> np.ndarray:
        """Distance of each value to the estimated set (inf when it is empty)."""
        return np.array([self.value_set_.distance(t) for t in self._values(T)])

    def predict(self, T) -> np.ndarray:
        """True where the value lies in the set, up to ``margin``."""
        return self.decision_function(T) <= self.margin


class NonRegularValues(_ValueSetEstimator):
    """Estimate of the stratified non-regular value set of a polynomial map.

    Parameters mirror :func:`stratfib.critical.sigma_components`; an unset
    ``stratification`` means the trivial one on R^n. After ``fit``,
    ``critical_values_`` and ``values_at_infinity_`` map stratum ids to the
    per-stratum value sets whose union is ``value_set_``.
    """

    def __init__(self, stratification=None, r0=4.0, factor=2.0, count=11, seed=0, starts=16,
                 samples=32, region_half_width=10.0, margin=1e-3):
        self.stratification = stratification
        self.r0 = r0
        self.factor = factor
        self.count = count
        self.seed = seed
        self.starts = starts
        self.samples = samples
        self.region_half_width = region_half_width
        self.margin = margin

    def fit(self, F, y=None):
        f = _as_map(F)
        W = self.stratification or Stratification.trivial(f.nvars)
        res = sigma_components(f, W, Schedule(self.r0, self.factor, self.count), self.seed,
                               Box.cube(f.nvars, self.region_half_width), self.samples, self.starts)
        self.map_ = f
        self.value_set_ = res.sigma
        self.critical_values_ = res.sing
        self.values_at_infinity_ = res.s_inf
        return self


class AsymptoticCriticalValues(_ValueSetEstimator):
    """Limits of F along branches where |x| times the smallest singular value of dF tends to 0."""

    def __init__(self, r0=4.0, factor=2.0, count=11, seed=0, starts=16, margin=1e-3):
        self.r0 = r0
        self.factor = factor
        self.count = count
        self.seed = seed
        self.starts = starts
        self.margin = margin

    def fit(self, F, y=None):
        f = _as_map(F)
        self.map_ = f
        self.value_set_ = k_infinity_estimate(f, Schedule(self.r0, self.factor, self.count), self.seed, self.starts)
        return self


class FiberTrivializer(BaseEstimator):
    """Triviality check of a map over a box; ``predict`` counts fiber components."""

    def __init__(self, box, stratification=None, radii=None, grid=None, n_fiber=8, tol=1e-9, seed=0,
                 window_half_width=20.0, spacing=0.01):
        self.box = box
        self.stratification = stratification
        self.radii = radii
        self.grid = grid
        self.n_fiber = n_fiber
        self.tol = tol
        self.seed = seed
        self.window_half_width = window_half_width
        self.spacing = spacing

    def _box(self) -> Box:
        if isinstance(self.box, Box):
            return self.box
        b = np.atleast_2d(np.asarray(self.box, float))
        return Box(tuple(b[:, 0]), tuple(b[:, 1]))

    def fit(self, F, y=None):
        f = _as_map(F)
        W = self.stratification or Stratification.trivial(f.nvars)
        self.map_ = f
        self.stratification_ = W
        self.result_ = trivialize_box(f, W, self._box(), grid=self.grid, n_fiber=self.n_fiber, tol=self.tol,
                                      radii=self.radii, seed=self.seed,
                                      window=Box.cube(f.nvars, self.window_half_width), spacing=self.spacing)
        return self

    def score(self, F=None, y=None) -> float:
        """1.0 when the trivialization check passed, else 0.0."""
        check_is_fitted(self, "result_")
        return float(self.result_.passed)

    def predict(self, T) -> np.ndarray:
        """Number of connected fiber components at each value (inside the window)."""
        check_is_fitted(self, "result_")
        T = check_array(np.asarray(T, float).reshape(len(T), -1))
        window = Box.cube(self.map_.nvars, self.window_half_width)
        return np.array([fiber_components(self.map_, self.stratification_, t, window, self.spacing).count
                         for t in T])
