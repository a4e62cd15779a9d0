"""scikit-learn style estimators wrapping the functional API.

``X`` is the matrix of possibly endogenous regressors; included exogenous
regressors and excluded instruments are passed to ``fit`` as keyword
arguments.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .estimators import fit as _fit
from .exceptions import InvalidInput
from .mct import ErrorLaw, MctConfig, mc_test
from .problem import make_problem
from .statistics import compute_direct, reference_pvalues


def _validated(X, y, exog, instruments, fit_intercept):
    X, y = check_X_y(X, y, y_numeric=True)
    if instruments is None:
        raise InvalidInput("instruments are required")
    Z = check_array(instruments)
    W = None if exog is None else check_array(exog)
    for name, a in (("instruments", Z), ("exog", W)):
        if a is not None and a.shape[0] != X.shape[0]:
            raise InvalidInput(f"{name} has {a.shape[0]} rows, X has {X.shape[0]}")
    return make_problem(y, X, Z, W, add_intercept=fit_intercept)


class TwoStageLeastSquares(RegressorMixin, BaseEstimator):
    """Two-stage least squares for ``y = X beta + exog gamma + u``.

    Parameters
    ----------
    fit_intercept : bool, default=True

    Attributes
    ----------
    coef_ : ndarray of shape (G,)
        2SLS coefficients of the endogenous regressors.
    intercept_ : float
    exog_coef_ : ndarray
        Coefficients of ``exog`` (without the intercept).
    ols_coef_ : ndarray of shape (G,)
        OLS coefficients, for comparison.
    estimates_ : EstimatorBundle
    """

    def __init__(self, fit_intercept=True):
        self.fit_intercept = fit_intercept

    def fit(self, X, y, *, exog=None, instruments=None):
        p = _validated(X, y, exog, instruments, self.fit_intercept)
        b = _fit(p)
        self.estimates_ = b
        self.coef_ = b.beta_2sls
        self.ols_coef_ = b.beta_ols
        gamma = b.gamma_2sls
        self.intercept_ = float(gamma[0]) if self.fit_intercept else 0.0
        self.exog_coef_ = gamma[1:] if self.fit_intercept else gamma
        self.n_features_in_ = p.G
        return self

    def predict(self, X, exog=None):
        check_is_fitted(self)
        X = check_array(X)
        out = X @ self.coef_ + self.intercept_
        if self.exog_coef_.size:
            if exog is None:
                raise InvalidInput("exog is required for prediction")
            out = out + check_array(exog) @ self.exog_coef_
        return out


class ExogeneityTest(BaseEstimator):
    """Exogeneity tests of ``X`` with Monte Carlo p-values.

    Parameters
    ----------
    n_draws : int, default=199
        Monte Carlo draws; 0 skips the Monte Carlo test.
    alpha : float, default=0.05
    law : str or ErrorLaw, default="gaussian"
        Null error law, ``"gaussian"`` or ``"t:<df>"``.
    random_state : int, default=0
    fit_intercept : bool, default=True
    n_jobs : int, default=1

    Attributes
    ----------
    problem_ : ExogeneityProblem
    estimates_ : EstimatorBundle
    statistics_ : StatisticSet
    reference_pvalues_ : dict
    mc_report_ : MctReport or None
    pvalues_ : dict
        Monte Carlo p-values (reference p-values when ``n_draws == 0``).
    reject_ : dict
        Decisions at level ``alpha`` based on ``pvalues_``.
    """

    def __init__(self, n_draws=199, alpha=0.05, law="gaussian", random_state=0,
                 fit_intercept=True, n_jobs=1):
        self.n_draws = n_draws
        self.alpha = alpha
        self.law = law
        self.random_state = random_state
        self.fit_intercept = fit_intercept
        self.n_jobs = n_jobs

    def fit(self, X, y, *, exog=None, instruments=None):
        if not isinstance(self.random_state, (int, np.integer)):
            raise InvalidInput("random_state must be an integer seed")
        p = _validated(X, y, exog, instruments, self.fit_intercept)
        self.problem_ = p
        self.estimates_ = _fit(p)
        self.statistics_ = compute_direct(p, self.estimates_)
        self.reference_pvalues_ = reference_pvalues(self.statistics_, p.dims)
        if self.n_draws:
            law = self.law if isinstance(self.law, ErrorLaw) else ErrorLaw.parse(self.law)
            cfg = MctConfig(self.n_draws, self.alpha, int(self.random_state), law, n_jobs=self.n_jobs)
            self.mc_report_ = mc_test(p, cfg)
            self.pvalues_ = self.mc_report_.pvalues
            self.reject_ = self.mc_report_.decisions
        else:
            self.mc_report_ = None
            self.pvalues_ = {k: v["pvalue"] for k, v in self.reference_pvalues_.items()}
            self.reject_ = {k: v <= self.alpha for k, v in self.pvalues_.items()}
        self.n_features_in_ = p.G
        return self
