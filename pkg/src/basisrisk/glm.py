"""Per-farm loss regressions.

Two estimators share the sklearn fit/predict surface: a no-intercept
Gaussian linear model used on all standardized days, and a Tweedie-type
model for the filtered tail days with power-link mean (a'Y)**p and
variance phi * mean**q, fitted by quasi-likelihood IRLS so that
negative standardized responses are handled.

Hyperparameter selection runs a (p, q) grid search. Cells are compared
on the profile pseudo-likelihood criterion (Gaussian working likelihood
with the dispersion profiled out), which is comparable across variance
powers; the reported deviance is the generalized Pearson statistic
sum((x - mu)^2 / mu^q).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .exceptions import (
    NonConvergenceError,
    NonPositivePredictorError,
    RankDeficientError,
)

PREDICTOR_FLOOR = 1e-6

DEFAULT_P_GRID = np.arange(0.5, 2.0 + 1e-9, 0.25)
DEFAULT_Q_GRID = np.arange(0.0, 2.0 + 1e-9, 0.25)


def _check_xy(Y, x):
    Y = np.asarray(Y, dtype=float)
    x = np.asarray(x, dtype=float)
    if Y.ndim != 2:
        raise ValueError("covariates must be 2d (n_days, n_covariates)")
    if x.shape != (Y.shape[0],):
        raise ValueError("response length does not match covariates")
    if not (np.isfinite(Y).all() and np.isfinite(x).all()):
        raise ValueError("non-finite values in regression inputs")
    if Y.shape[0] <= Y.shape[1]:
        raise ValueError("need more observations than covariates")
    return Y, x


def _check_rank(Y):
    if np.linalg.matrix_rank(Y) < Y.shape[1]:
        raise RankDeficientError("covariate matrix is rank deficient")


class GaussianLossModel(RegressorMixin, BaseEstimator):
    """No-intercept Gaussian regression of standardized losses on the
    reference covariates.

    Attributes after fit: coef_, stderr_, resid_var_ (both dof-adjusted).
    """

    def fit(self, Y, x):
        Y, x = _check_xy(Y, x)
        _check_rank(Y)
        coef, _, _, _ = np.linalg.lstsq(Y, x, rcond=None)
        resid = x - Y @ coef
        dof = Y.shape[0] - Y.shape[1]
        self.resid_var_ = float(resid @ resid) / dof
        self.coef_ = coef
        self.stderr_ = np.sqrt(self.resid_var_ * np.diag(np.linalg.inv(Y.T @ Y)))
        self.n_obs_ = Y.shape[0]
        return self

    def predict(self, Y):
        if not hasattr(self, "coef_"):
            raise NotFittedError("fit before predict")
        return np.asarray(Y, dtype=float) @ self.coef_


class TweedieLossModel(RegressorMixin, BaseEstimator):
    """Quasi-likelihood power-link regression for tail losses.

    Mean (a'Y)**p, variance phi * mean**q. Fitted by IRLS with working
    weights (dmu/deta)^2 / V(mu); the linear predictor is floored at
    ``predictor_floor`` whenever the (p, q) pair actually requires a
    positive predictor (p = 1, q = 0 degenerates to plain least squares
    and is left unfloored so it reproduces the Gaussian fit exactly).

    Attributes after fit: coef_, phi_ (Pearson dispersion), deviance_
    (generalized Pearson statistic), criterion_ (profile
    pseudo-likelihood used for grid selection), n_floored_ (rows still
    at the floor on the final iteration), n_iter_.
    """

    def __init__(self, p: float = 1.0, q: float = 1.0, max_iter: int = 100,
                 tol: float = 1e-8, predictor_floor: float = PREDICTOR_FLOOR):
        self.p = p
        self.q = q
        self.max_iter = max_iter
        self.tol = tol
        self.predictor_floor = predictor_floor

    # p = 1 with q = 0 is exactly OLS; flooring would distort it
    def _needs_floor(self) -> bool:
        return not (self.p == 1.0 and self.q == 0.0)

    def fit(self, Y, x):
        Y, x = _check_xy(Y, x)
        _check_rank(Y)
        p, q = float(self.p), float(self.q)
        floor = self.predictor_floor if self._needs_floor() else -np.inf

        # transform-both-sides start: regress x^(1/p) on Y
        x0 = np.power(np.clip(x, self.predictor_floor, None), 1.0 / p)
        coef, _, _, _ = np.linalg.lstsq(Y, x0, rcond=None)

        for it in range(1, self.max_iter + 1):
            eta = np.maximum(Y @ coef, floor)
            mu = eta**p
            dmu = p * eta ** (p - 1.0)
            w = dmu**2 / mu**q
            z = eta + (x - mu) / dmu
            sw = np.sqrt(w)
            new, _, rank, _ = np.linalg.lstsq(Y * sw[:, None], z * sw, rcond=None)
            if rank < Y.shape[1]:
                raise RankDeficientError("weighted covariates lost rank during IRLS")
            step = np.max(np.abs(new - coef)) / max(np.max(np.abs(new)), 1.0)
            coef = new
            if step < self.tol:
                break
        else:
            raise NonConvergenceError(
                f"IRLS did not converge in {self.max_iter} iterations (p={p}, q={q})"
            )

        eta = Y @ coef
        floored = eta < floor
        eta = np.maximum(eta, floor)
        mu = eta**p
        pearson = (x - mu) ** 2 / mu**q
        n, k = Y.shape
        self.coef_ = coef
        self.n_iter_ = it
        self.n_floored_ = int(floored.sum())
        self.deviance_ = float(pearson.sum())
        self.phi_ = self.deviance_ / (n - k)
        phi_ml = max(self.deviance_ / n, 1e-300)
        # q == 0 is the one cell where mu may be negative; its log term
        # vanishes anyway, so skip it rather than propagate NaN.
        log_term = 0.0 if q == 0 else q * float(np.sum(np.log(mu)))
        self.criterion_ = n * np.log(phi_ml) + log_term
        return self

    def _linear_predictor(self, Y):
        if not hasattr(self, "coef_"):
            raise NotFittedError("fit before predict")
        return np.asarray(Y, dtype=float) @ self.coef_

    def predict(self, Y, floor: float | None = None):
        """Conditional mean (a'Y)**p.

        With ``floor=None`` a non-positive linear predictor raises; a
        float floors the predictor instead (used when scoring simulated
        scenarios far from the fitted region).
        """
        eta = self._linear_predictor(Y)
        if floor is None:
            if self._needs_floor() and np.any(eta <= 0.0):
                raise NonPositivePredictorError(
                    "non-positive linear predictor under a power link"
                )
        else:
            eta = np.maximum(eta, floor)
        return eta**self.p

    def predict_var(self, Y, floor: float | None = None):
        """Conditional variance phi * mean**q."""
        return self.phi_ * self.predict(Y, floor=floor) ** self.q


def fit_gaussian(Y, x) -> GaussianLossModel:
    return GaussianLossModel().fit(Y, x)


def fit_tweedie(Y, x, p: float, q: float, **kw) -> TweedieLossModel:
    return TweedieLossModel(p=p, q=q, **kw).fit(Y, x)


def grid_search_tweedie(Y, x, p_grid=None, q_grid=None):
    """Fit every (p, q) cell and keep the minimal selection criterion.

    Ties break toward smaller p, then smaller q (scan order plus strict
    improvement). Cells whose IRLS fails are skipped; if every cell
    fails a NonConvergenceError propagates.

    Returns (model, table) where table has one row per converged cell:
    (p, q, criterion, deviance).
    """
    p_grid = DEFAULT_P_GRID if p_grid is None else np.asarray(p_grid, dtype=float)
    q_grid = DEFAULT_Q_GRID if q_grid is None else np.asarray(q_grid, dtype=float)

    best = None
    rows = []
    for p in p_grid:
        for q in q_grid:
            try:
                cand = TweedieLossModel(p=float(p), q=float(q)).fit(Y, x)
            except (NonConvergenceError, RankDeficientError):
                continue
            rows.append((float(p), float(q), cand.criterion_, cand.deviance_))
            if best is None or cand.criterion_ < best.criterion_:
                best = cand
    if best is None:
        raise NonConvergenceError("no (p, q) grid cell converged")
    return best, rows
