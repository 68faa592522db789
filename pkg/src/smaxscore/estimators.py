"""Scikit-learn style estimators wrapping the functional core.

Design matrix convention: ``X[:, 0]`` is the covariate whose coefficient is
normalized to one (the scale anchor of the binary response model) and
``X[:, 1:]`` are the covariates whose coefficient vector is estimated.
Labels are strictly -1/+1.  All estimators expose ``coef_`` after ``fit``
and predict the response sign; hyperparameters follow the usual
get_params/set_params protocol so the estimators compose with pipelines and
model-selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import distributed, highdim, inference
from .data import Dataset
from .local_solver import SolveOptions, solve_local_smse, solve_mse_grid_1d, default_grid_bounds


def check_design(X, y=None):
    """Validate the (x, z) design matrix and optional -1/+1 labels."""
    X = check_array(X, dtype=np.float64, ensure_min_features=2)
    if y is None:
        return X
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError("y must be 1-d and aligned with X")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be -1 or +1")
    return X, y


def _as_dataset(X, y) -> Dataset:
    return Dataset(y=y, x=X[:, 0], z=X[:, 1:])


class _MaxScoreBase(BaseEstimator, ClassifierMixin):
    """Shared prediction surface for the maximum-score family."""

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_design(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("X has a different number of features than at fit")
        return X[:, 0] + X[:, 1:] @ self.coef_

    def predict(self, X):
        margin = self.decision_function(X)
        return np.where(margin >= 0.0, 1.0, -1.0)

    def _mark_fitted(self, X):
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([-1.0, 1.0])

    def _solve_options(self) -> SolveOptions:
        return SolveOptions(max_iters=self.max_iters, grad_tol=self.grad_tol)


def _default_bandwidth(n: int, lambda_h: float, alpha: int) -> float:
    return (lambda_h / n) ** (1.0 / (2 * alpha + 1))


class SmoothedMaxScore(_MaxScoreBase):
    """Smoothed maximum score estimator on the pooled sample.

    Minimizes the kernel-smoothed sign-mismatch objective by continuation
    descent.  ``bandwidth=None`` selects (lambda_h / n)^(1/(2 alpha + 1)).
    """

    def __init__(self, bandwidth=None, lambda_h=1.0, alpha=2,
                 max_iters=500, grad_tol=1e-6):
        self.bandwidth = bandwidth
        self.lambda_h = lambda_h
        self.alpha = alpha
        self.max_iters = max_iters
        self.grad_tol = grad_tol

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        h = self.bandwidth or _default_bandwidth(data.n, self.lambda_h, self.alpha)
        self.coef_ = solve_local_smse(data, h, self._solve_options())
        self.bandwidth_ = h
        self._mark_fitted(X)
        return self


class GridMaxScore1D(_MaxScoreBase):
    """Raw maximum score by grid search; single z covariate only."""

    def __init__(self, lo=None, hi=None, steps=2001):
        self.lo = lo
        self.hi = hi
        self.steps = steps

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        if data.p != 1:
            raise ValueError("grid search supports exactly one z covariate")
        lo, hi = self.lo, self.hi
        if lo is None or hi is None:
            dlo, dhi = default_grid_bounds(data)
            lo = dlo if lo is None else lo
            hi = dhi if hi is None else hi
        self.coef_ = np.array([solve_mse_grid_1d(data, lo, hi, self.steps)])
        self._mark_fitted(X)
        return self


class AverageSmoothedMaxScore(_MaxScoreBase):
    """One-shot averaging of per-machine smoothed solves.

    Rows are split contiguously into ``n_machines`` equal shards; each shard
    is solved at the shared pooled-optimal bandwidth and the solutions are
    averaged.
    """

    def __init__(self, n_machines=1, bandwidth=None, lambda_h=1.0, alpha=2,
                 max_iters=500, grad_tol=1e-6):
        self.n_machines = n_machines
        self.bandwidth = bandwidth
        self.lambda_h = lambda_h
        self.alpha = alpha
        self.max_iters = max_iters
        self.grad_tol = grad_tol

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        shards = distributed.partition(data, self.n_machines)
        h = self.bandwidth or _default_bandwidth(data.n, self.lambda_h, self.alpha)
        self.coef_ = distributed.avg_smse(shards, h, self._solve_options())
        self.bandwidth_ = h
        self._mark_fitted(X)
        return self


class AverageMaxScore1D(_MaxScoreBase):
    """One-shot averaging of per-machine grid solves (single z covariate).

    After ``fit`` the spread of the machine estimates yields a normal
    interval via ``confidence_interval``.
    """

    def __init__(self, n_machines=2, lo=None, hi=None, steps=2001):
        self.n_machines = n_machines
        self.lo = lo
        self.hi = hi
        self.steps = steps

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        if data.p != 1:
            raise ValueError("grid search supports exactly one z covariate")
        shards = distributed.partition(data, self.n_machines)
        lo, hi = self.lo, self.hi
        if lo is None or hi is None:
            dlo, dhi = default_grid_bounds(shards[0].data)
            lo = dlo if lo is None else lo
            hi = dhi if hi is None else hi
        self.local_estimates_ = distributed.local_mse_estimates(
            shards, lo, hi, self.steps)
        self.coef_ = np.array([float(np.mean(self.local_estimates_))])
        self._mark_fitted(X)
        return self

    def confidence_interval(self, level=0.95) -> inference.InferenceReport:
        check_is_fitted(self, "local_estimates_")
        return inference.avg_mse_interval(self.local_estimates_, 1.0 - level)


class MultiRoundSmoothedMaxScore(_MaxScoreBase):
    """Multi-round distributed Newton refinement with shrinking bandwidths.

    Fitting stores the iterate trace, the plug-in nuisance estimates at the
    final bandwidth, and supports bias-corrected intervals for projections
    of the coefficient vector.  ``plugin_lambda=True`` re-runs the rounds
    once with the estimated MSE-optimal bandwidth constant.
    """

    def __init__(self, n_machines=1, lambda_h=1.0, alpha=2, T_override=None,
                 ridge_eps=None, kappa=0.5, plugin_lambda=False,
                 max_iters=500, grad_tol=1e-6):
        self.n_machines = n_machines
        self.lambda_h = lambda_h
        self.alpha = alpha
        self.T_override = T_override
        self.ridge_eps = ridge_eps
        self.kappa = kappa
        self.plugin_lambda = plugin_lambda
        self.max_iters = max_iters
        self.grad_tol = grad_tol

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        shards = distributed.partition(data, self.n_machines)
        cfg = distributed.ScheduleConfig(
            alpha=self.alpha, lambda_h=self.lambda_h,
            T_override=self.T_override, ridge_eps=self.ridge_eps,
        )
        if self.plugin_lambda:
            trace, nu, lam = inference.msmse_plugin_lambda(
                shards, cfg, kappa=self.kappa)
        else:
            trace = distributed.msmse(shards, cfg)
            nu = inference.estimate_nuisances(
                shards, trace.final, trace.iterates[-1].h,
                self.alpha, self.kappa)
            lam = self.lambda_h
        self.trace_ = trace
        self.nuisances_ = nu
        self.lambda_used_ = lam
        self.n_rounds_ = trace.T
        self.n_samples_ = data.n
        self.coef_ = trace.final
        self._mark_fitted(X)
        return self

    def confidence_interval(self, v0=None, level=0.95) -> inference.InferenceReport:
        """Bias-corrected interval for v0' beta (default: sum of coefficients)."""
        check_is_fitted(self, "coef_")
        if v0 is None:
            v0 = np.ones_like(self.coef_)
        return inference.confidence_interval(
            self.coef_, self.nuisances_, v0, 1.0 - level,
            self.n_samples_, self.lambda_used_, self.alpha)


class SparseMultiRoundSmoothedMaxScore(_MaxScoreBase):
    """Sparse high-dimensional variant: per-round l1 steps.

    Requires an explicit warm start ``init`` (a p-vector); external sparse
    pilot estimators are out of scope.  ``h_star=None`` selects
    (log p / n)^(1/(2 alpha + 1)).
    """

    def __init__(self, n_machines=1, c_lambda=1.0, sparsity=None, rounds=8,
                 decay=0.5, h_star=None, alpha=2, init=None):
        self.n_machines = n_machines
        self.c_lambda = c_lambda
        self.sparsity = sparsity
        self.rounds = rounds
        self.decay = decay
        self.h_star = h_star
        self.alpha = alpha
        self.init = init

    def fit(self, X, y):
        X, y = check_design(X, y)
        data = _as_dataset(X, y)
        if self.init is None:
            raise ValueError("sparse fitting requires an explicit init vector")
        shards = distributed.partition(data, self.n_machines)
        h = self.h_star or highdim.default_h_star(data.n, data.p, self.alpha)
        cfg = highdim.HdConfig(
            alpha=self.alpha, C_lambda=self.c_lambda,
            sparsity_hint=self.sparsity, h_star=h, decay=self.decay,
        )
        self.trace_ = highdim.hd_msmse(shards, cfg, self.init,
                                       rounds=self.rounds)
        self.coef_ = self.trace_.final
        self.support_ = np.flatnonzero(
            np.abs(self.coef_) > 1e-6 * max(np.max(np.abs(self.coef_)), 1e-300))
        self._mark_fitted(X)
        return self
